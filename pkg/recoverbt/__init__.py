"""Failure recovery for behavior-tree robot task execution.

Plan with `recoverbt.planner`, run with `recoverbt.pipeline.run_task`, aggregate suites with
`recoverbt.report`; `recoverbt.cli` is the `rbt` entry point.
"""
