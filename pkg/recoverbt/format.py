from recoverbt import tree


class FormatException(Exception):
    pass


INDENT = "  "


def format_node(node: tree.BTNode) -> str:
    """Format a single node as one line, without indentation.

    Args:
        node (tree.BTNode): Node to format.

    Raises:
        FormatException: If the node type is unknown.

    Returns:
        str: e.g. `Condition* [n3] inside(blue_peg, green_hole)`
    """
    if isinstance(node, tree.Sequence):
        return f"Sequence [{node.id}]"
    elif isinstance(node, tree.Fallback):
        return f"Fallback [{node.id}]"
    elif isinstance(node, tree.Condition):
        star = "*" if node.expanded else ""
        return f"Condition{star} [{node.id}] {node.literal}"
    elif isinstance(node, tree.Action):
        return f"Action [{node.id}] {node.skill}"
    else:
        raise FormatException("unexpected node: %r" % node)


def render(root: tree.BTNode) -> str:
    """Render a tree as a deterministic listing, one node per line, children indented by two
    spaces under their parent. `Condition*` marks an expanded condition.
    """
    lines: list[str] = []

    def visit(node: tree.BTNode, depth: int):
        lines.append(INDENT * depth + format_node(node))
        for child in node.children:
            visit(child, depth + 1)

    visit(root, 0)
    return "\n".join(lines)
