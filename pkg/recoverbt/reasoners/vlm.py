"""
Vision-language reasoner over an OpenAI-compatible chat-completions endpoint.

One request per check: a system prompt with the condition vocabulary and a user prompt with
the goals, skills, tree, scene graph, recent history and the three Detection / Identification /
Correction questions. Replies must be a JSON object following the verdict schema; malformed or
schema-violating replies are re-asked with the complaint appended.
"""

import base64
import json
import logging
import re
import string
from pathlib import Path
from typing import Any, Protocol

import openai
import yaml
from tenacity import Retrying, retry_if_exception_type, stop_after_attempt

from recoverbt.config import EndpointConfig
from recoverbt.reasoners.base import Reasoner, ReasonerException, ReasonerInput
from recoverbt.verdict import CheckKind, Verdict, VerdictException

logger = logging.getLogger(__name__)

PROMPTS = Path(__file__).parent / "prompts"
NOT_DETECTED = '{"failure_detected": false}'


class BadReply(Exception):
    def __init__(self, variant: str, detail: str):
        super().__init__(detail)
        self.variant = variant


def load_template(name: str) -> string.Template:
    return string.Template((PROMPTS / name).read_text())


def load_questions(kind: CheckKind) -> dict[str, str]:
    """The `detection` / `identification` / `correction` / `format` lines of a check file."""
    questions: dict[str, str] = {}
    for line in (PROMPTS / ("%s.txt" % kind.value)).read_text().splitlines():
        if ":" in line:
            key, text = line.split(":", 1)
            questions[key.strip()] = text.strip()
    return questions


def extract_json(text: str) -> Any:
    """Decode the JSON object in a reply, tolerating markdown fences around it.

    Raises:
        BadReply: When no JSON object can be decoded.
    """
    text = re.sub(r"```(?:json)?\s*", "", text).replace("```", "")
    match = re.search(r"\{.*\}", text, re.DOTALL)
    if not match:
        raise BadReply("malformed-response", "reply contains no JSON object")
    try:
        return json.loads(match.group(0))
    except json.JSONDecodeError as e:
        raise BadReply("malformed-response", "reply is not valid JSON: %s" % e)


def parse_reply(text: str, kind: CheckKind) -> Verdict:
    """Parse a reply into a verdict for `kind`.

    Raises:
        BadReply: malformed-response for undecodable text, schema-violation for records that break
            the verdict schema or use literals outside the vocabulary.
    """
    record = extract_json(text)
    if not isinstance(record, dict):
        raise BadReply("malformed-response", "reply is not a JSON object")
    try:
        return Verdict.fromdict(record, kind)
    except VerdictException as e:
        raise BadReply("schema-violation", str(e))


class Transport(Protocol):
    def __call__(self, messages: list[dict], data: ReasonerInput) -> str: ...


class OpenAITransport:
    """Chat-completions call through the `openai` client, JSON mode, no client-side retries."""

    def __init__(self, config: EndpointConfig):
        self.config = config
        self.client = openai.OpenAI(
            base_url=config.url,
            api_key=config.api_key or "unset",
            timeout=config.timeout,
            max_retries=0,
        )

    def __call__(self, messages: list[dict], data: ReasonerInput) -> str:
        try:
            response = self.client.chat.completions.create(
                model=self.config.model,
                messages=messages,
                temperature=self.config.temperature,
                response_format={"type": "json_object"},
            )
        except openai.OpenAIError as e:
            raise ReasonerException("transport", str(e))
        if not response.choices or not response.choices[0].message.content:
            return ""
        return response.choices[0].message.content


class FixtureTransport:
    """Replays recorded replies from a YAML file instead of calling an endpoint.

        - kind: pre-execution
          reply: {failure_detected: true, ...}
        - kind: postcondition-verify
          skill: place_inside          # optional: template name or ground skill
          reply: "not json"            # raw text is sent back verbatim

    Each entry answers one request; unmatched requests get a not-detected reply.
    """

    def __init__(self, entries: list[dict]):
        self.entries = list(entries)
        self.calls = 0

    @classmethod
    def load(cls, path: Path | str) -> "FixtureTransport":
        path = Path(path)
        if not path.exists():
            raise ReasonerException("transport", "fixture not found: %s" % path)
        entries = yaml.safe_load(path.read_text()) or []
        if not isinstance(entries, list):
            raise ReasonerException("transport", "fixture must be a list of entries: %s" % path)
        return cls(entries)

    def _matches(self, entry: dict, data: ReasonerInput) -> bool:
        if entry.get("kind") != data.kind.value:
            return False
        if (skill := entry.get("skill")) is None:
            return True
        pending = data.pending
        return pending is not None and skill in (str(pending), pending.template)

    def __call__(self, messages: list[dict], data: ReasonerInput) -> str:
        self.calls += 1
        for idx, entry in enumerate(self.entries):
            if self._matches(entry, data):
                del self.entries[idx]
                reply = entry.get("reply", NOT_DETECTED)
                return reply if isinstance(reply, str) else json.dumps(reply)
        return NOT_DETECTED


class VLMReasoner(Reasoner):
    """Reasoner backed by a chat-completions endpoint (or a recorded fixture).

    Args:
        config (EndpointConfig): Endpoint, retry and prompt-section settings.
        transport (Transport, optional): Replaces the HTTP call; defaults to the fixture named by
            the config, else the OpenAI client.
    """

    name = "vlm"

    def __init__(self, config: EndpointConfig, transport: Transport | None = None):
        self.config = config
        if transport is None:
            transport = FixtureTransport.load(config.fixture) if config.fixture else OpenAITransport(config)
        self.transport = transport
        self.system = (PROMPTS / "system.txt").read_text()
        self.template = load_template("check.txt")

    def prompt(self, data: ReasonerInput) -> str:
        questions = load_questions(data.kind)
        pending = str(data.pending) if data.pending is not None else "the pending skill"
        focus = (
            "The planner found no skill achieving %s." % data.unachievable
            if data.unachievable is not None
            else "The pending skill is %s." % pending
        )
        fill = {"pending": pending, "focus": focus}
        scene_section = history_section = pending_section = ""
        if self.config.include_scene_graph:
            scene_section = "\n## Scene graph\n%s\n" % data.scene_text
        if self.config.include_history:
            window = data.history[-self.config.history_window :] if self.config.history_window else []
            text = yaml.safe_dump(window, sort_keys=False).strip() if window else "(no skills executed yet)"
            history_section = "\n## Execution history\n%s\n" % text
        if data.pending is not None:
            verb = "just executed" if data.kind == CheckKind.PostconditionVerify else "about to execute"
            pending_section = "\n## Skill %s\n%s\n  pre:  %s\n  post: %s\n" % (
                verb,
                data.pending,
                ", ".join(map(str, data.pending.preconditions)) or "(none)",
                ", ".join(map(str, data.pending.postconditions)),
            )
        return self.template.substitute(
            kind=data.kind.value,
            goals="\n".join(map(str, data.goals)),
            skills=data.catalog_text,
            tree=data.tree_text,
            scene_section=scene_section,
            history_section=history_section,
            pending_section=pending_section,
            detection=string.Template(questions["detection"]).safe_substitute(fill),
            identification=string.Template(questions["identification"]).safe_substitute(fill),
            correction=string.Template(questions["correction"]).safe_substitute(fill),
            correction_format=questions["format"],
        )

    def attachments(self, data: ReasonerInput) -> list[dict]:
        parts = []
        for path in data.images if self.config.include_images else ():
            try:
                encoded = base64.b64encode(Path(path).read_bytes()).decode("utf-8")
            except OSError as e:
                logger.warning("skipping image %s: %s", path, e)
                continue
            mime = "image/png" if str(path).endswith(".png") else "image/jpeg"
            parts.append({"type": "image_url", "image_url": {"url": "data:%s;base64,%s" % (mime, encoded)}})
        return parts

    def messages(self, data: ReasonerInput) -> list[dict]:
        text = self.prompt(data)
        images = self.attachments(data)
        content: Any = [{"type": "text", "text": text}] + images if images else text
        return [{"role": "system", "content": self.system}, {"role": "user", "content": content}]

    def judge(self, data: ReasonerInput) -> Verdict:
        messages = self.messages(data)
        try:
            for attempt in Retrying(
                stop=stop_after_attempt(self.config.retries + 1),
                retry=retry_if_exception_type(BadReply),
                reraise=True,
            ):
                with attempt:
                    reply = self.transport(messages, data)
                    try:
                        verdict = parse_reply(reply, data.kind)
                    except BadReply as e:
                        logger.warning("%s reply rejected (%s): %s", data.kind.value, e.variant, e)
                        messages = messages + [
                            {"role": "assistant", "content": reply},
                            {"role": "user", "content": "Your reply was rejected: %s. Answer again with one JSON object." % e},
                        ]
                        raise
                    return verdict
        except BadReply as e:
            raise ReasonerException(e.variant, str(e))
