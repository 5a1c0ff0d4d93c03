"""Profile-conditioned prompting of an OpenAI-compatible chat endpoint.

Answers are read from the last ``[[...]]`` group in the completion. A mock
client (endpoint URLs starting with ``mock://``) makes the whole path testable
offline:

* ``mock://fixed/3`` always answers ``[[3]]``
* ``mock://hash/1,2,3,4,5`` picks an answer from a hash of the prompt
* ``mock://script/x,[[2]]`` replays the listed completions in order, then repeats the last
* ``mock://down`` fails every request
"""

import hashlib
import json
import logging
import os
import re
import string
import threading
import urllib.error
import urllib.request
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

from .dataio import atomic_write_text, dumps_canonical, read_dataset, validate_dataset
from .errors import (DatasetError, EndpointError, ExtractionError, InvalidAnswerError,
                     TemplateError)

log = logging.getLogger(__name__)

_BRACKETS = re.compile(r"\[\[(.*?)\]\]", re.S)
LETTERS = string.ascii_uppercase


@dataclass(frozen=True)
class PromptTemplate:
    """Persona text, question block and a fixed answer-format instruction.

    ``answer_style`` is "number" (answers 1..n) or "letter" (answers A..).
    """

    persona_preamble: str
    question_block: str
    instruction_suffix: str
    answer_style: str = "number"

    def labels(self, n_options):
        if self.answer_style == "letter":
            return [LETTERS[i] for i in range(n_options)]
        return [str(i + 1) for i in range(n_options)]

    @classmethod
    def from_file(cls, path):
        try:
            with open(path, encoding="utf-8") as fh:
                doc = json.load(fh)
            return cls(**doc)
        except (OSError, json.JSONDecodeError, TypeError) as exc:
            raise TemplateError(f"{path}: cannot load template ({exc})") from None


OPINION_TEMPLATE = PromptTemplate(
    persona_preamble=("Imagine you live in the US and answer as yourself. You are {age} years old,"
                      " {sex}, your highest education is {education}, you live in the {region},"
                      " your yearly household income is {income} and you describe your politics"
                      " as {ideology}."),
    question_block="Question: {question}\n{options}",
    instruction_suffix=("Reply with one option number from 1 to {n_options} written inside double"
                        " square brackets, like [[1]]."),
)

EEDI_TEMPLATE = PromptTemplate(
    persona_preamble=("You are a {age}-year-old {sex} student in year {year_group} working through"
                      " a maths quiz."),
    question_block="{question}\n{options}",
    instruction_suffix=("Work through the problem, then write the letter of your final choice"
                        " inside double square brackets, like [[A]]."),
    answer_style="letter",
)

BUILTIN_TEMPLATES = {"opinion": OPINION_TEMPLATE, "eedi": EEDI_TEMPLATE}


def _slots(text):
    return [name for _, name, _, _ in string.Formatter().parse(text) if name]


def render_prompt(template, profile_fields, question):
    """Fill the template from a profile and a question dict with text and options."""
    if not isinstance(question, dict):
        question = {"text": str(question)}
    text = question.get("text") or ""
    if not text.strip():
        raise TemplateError("question text is empty", slot="question")
    options = question.get("options") or []
    labels = template.labels(len(options))
    option_lines = "\n".join(f"{lab}. {opt}" for lab, opt in zip(labels, options))
    values = dict(profile_fields)
    values.update(question=text.strip(), options=option_lines, n_options=len(options))
    parts = []
    for piece in (template.persona_preamble, template.question_block, template.instruction_suffix):
        for slot in _slots(piece):
            if slot not in values:
                raise TemplateError(f"missing template slot {slot!r}", slot=slot)
        parts.append(piece.format(**values))
    suffix = parts[-1]
    prompt = "\n\n".join(p for p in parts if p)
    if prompt.count(suffix) != 1:
        raise TemplateError("rendered prompt must contain the answer instruction exactly once")
    return prompt


def extract_answer(completion_text, valid_answers):
    """Trimmed content of the last ``[[...]]`` group that is a valid answer."""
    valid = {str(v) for v in valid_answers}
    if not valid:
        raise ExtractionError("valid_answers is empty")
    groups = _BRACKETS.findall(completion_text or "")
    if not groups:
        raise ExtractionError("no [[...]] answer in completion")
    for g in reversed(groups):
        if g.strip() in valid:
            return g.strip()
    raise InvalidAnswerError(f"bracketed answers {groups!r} are not among {sorted(valid)}")


# ---------------------------------------------------------------- clients


@dataclass(frozen=True)
class GenConfig:
    """Endpoint settings. The API key is read from ``api_key_env`` on use and
    never stored on the object or written anywhere."""

    endpoint_url: str
    model_name: str
    temperature: float = 1.0
    max_retries: int = 3
    timeout: float = 60.0
    api_key_env: str = "OPENAI_API_KEY"
    max_in_flight: int = 4

    def api_key(self):
        return os.environ.get(self.api_key_env)

    def to_dict(self):
        return {"endpoint_url": self.endpoint_url, "model_name": self.model_name,
                "temperature": self.temperature, "max_retries": self.max_retries,
                "timeout": self.timeout, "api_key_env": self.api_key_env,
                "max_in_flight": self.max_in_flight}


class HttpChatClient:
    """Minimal chat-completions client over urllib."""

    def __init__(self, cfg):
        self.cfg = cfg

    def complete(self, prompt):
        body = json.dumps({"model": self.cfg.model_name, "temperature": self.cfg.temperature,
                           "messages": [{"role": "user", "content": prompt}]}).encode()
        headers = {"Content-Type": "application/json"}
        key = self.cfg.api_key()
        if key:
            headers["Authorization"] = f"Bearer {key}"
        req = urllib.request.Request(self.cfg.endpoint_url, data=body, headers=headers,
                                     method="POST")
        try:
            with urllib.request.urlopen(req, timeout=self.cfg.timeout) as resp:
                doc = json.loads(resp.read().decode("utf-8"))
        except urllib.error.HTTPError as exc:
            raise EndpointError(f"HTTP {exc.code} from endpoint") from None
        except (urllib.error.URLError, TimeoutError, OSError) as exc:
            raise EndpointError(f"endpoint unreachable: {getattr(exc, 'reason', exc)}") from None
        except json.JSONDecodeError:
            raise EndpointError("endpoint returned invalid JSON") from None
        try:
            return doc["choices"][0]["message"]["content"]
        except (KeyError, IndexError, TypeError):
            raise EndpointError("unexpected chat-completions response shape") from None


class MockChatClient:
    """Offline stand-in driven by a ``mock://`` URL (see module docstring)."""

    def __init__(self, url):
        rest = url[len("mock://"):]
        kind, _, arg = rest.partition("/")
        if kind not in ("fixed", "hash", "script", "down"):
            raise EndpointError(f"unknown mock endpoint {url!r}")
        self.kind = kind
        self.items = arg.split(",") if arg else []
        self.calls = 0
        self._lock = threading.Lock()

    def complete(self, prompt):
        with self._lock:
            i = self.calls
            self.calls += 1
        if self.kind == "down":
            raise EndpointError("mock endpoint is down")
        if self.kind == "fixed":
            return f"[[{self.items[0]}]]"
        if self.kind == "hash":
            h = int(hashlib.sha256(prompt.encode()).hexdigest(), 16)
            return f"My answer is [[{self.items[h % len(self.items)]}]]"
        return self.items[min(i, len(self.items) - 1)]


def make_client(cfg):
    if cfg.endpoint_url.startswith("mock://"):
        return MockChatClient(cfg.endpoint_url)
    return HttpChatClient(cfg)


# ------------------------------------------------------------- generation


@dataclass
class GenerationReport:
    appended: dict
    short: list
    provenance: list = field(default_factory=list)


def _ask(client, prompt, labels, max_retries):
    """(label or None, attempts). Raises EndpointError if the last attempt hit one."""
    last = None
    for attempt in range(1, max_retries + 2):
        try:
            return extract_answer(client.complete(prompt), labels), attempt
        except ExtractionError as exc:
            last = exc
        except EndpointError as exc:
            last = exc
        log.debug("attempt %d failed: %s", attempt, last)
    if isinstance(last, EndpointError):
        raise EndpointError(f"{last} (after {max_retries + 1} attempts)")
    return None, max_retries + 1


def generate_responses(dataset_path, template, gen_cfg, profiles, k, rng, client=None):
    """Append k synthetic answers per question to a dataset file, atomically.

    Profiles are drawn with replacement from ``profiles``. Answers are stored as
    1-based option codes, or as 1/0 correctness when the question has an
    ``answer`` code. Unparseable answers after all retries become gaps and the
    question is flagged short. Transport failures abort the run and leave the
    file untouched.
    """
    if k < 1:
        raise DatasetError("k must be >= 1", field="k")
    if not profiles:
        raise DatasetError("profile pool is empty", field="profiles")
    dataset = read_dataset(dataset_path)
    client = client or make_client(gen_cfg)
    picks = rng.integers(len(profiles), size=(len(dataset.questions), k))
    jobs = []
    for qi, q in enumerate(dataset.questions):
        options = q.get("options")
        if not options:
            raise DatasetError("generation needs answer options", q["id"], "options")
        labels = template.labels(len(options))
        for r in range(k):
            prompt = render_prompt(template, profiles[picks[qi, r]], q)
            jobs.append((qi, r, prompt, labels))

    def run(job):
        qi, r, prompt, labels = job
        label, attempts = _ask(client, prompt, labels, gen_cfg.max_retries)
        return qi, r, prompt, labels, label, attempts

    with ThreadPoolExecutor(max_workers=max(1, gen_cfg.max_in_flight)) as pool:
        results = list(pool.map(run, jobs))  # map keeps job order

    new = {qi: [] for qi in range(len(dataset.questions))}
    provenance = []
    for qi, r, prompt, labels, label, attempts in results:
        q = dataset.questions[qi]
        provenance.append({"question_id": q["id"], "index": r, "model": gen_cfg.model_name,
                           "prompt_sha256": hashlib.sha256(prompt.encode()).hexdigest(),
                           "attempts": attempts, "status": "ok" if label else "gap"})
        log.info("question %s response %d: %s after %d attempt(s)", q["id"], r,
                 "ok" if label else "gap", attempts)
        if label is None:
            continue
        code = labels.index(label) + 1
        if "answer" in q:
            new[qi].append(1 if code == q["answer"] else 0)
        else:
            new[qi].append(code)

    doc = dataset.to_json()
    doc["questions"] = [dict(q) for q in doc["questions"]]
    for qi, q in enumerate(doc["questions"]):
        q["synthetic_responses"] = list(q["synthetic_responses"]) + new[qi]
    validate_dataset(doc)
    atomic_write_text(dataset_path, dumps_canonical(doc))
    appended = {dataset.questions[qi]["id"]: len(v) for qi, v in new.items()}
    short = [qid for qid, n in appended.items() if n < k]
    return GenerationReport(appended=appended, short=short, provenance=provenance)
