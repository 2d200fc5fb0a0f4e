"""Deterministic stand-in providers for dry runs and tests.

The responder inspects each request's purpose and answers with
schema-valid, seed-deterministic text, so a full pipeline run becomes a
pure function of (config, seed). Student answers depend on the bound
model id, which changes after every fine-tune hook call, giving dry runs
a plausibly evolving error profile.
"""

from __future__ import annotations

import hashlib
import json
import re

from .evaluation import TaskSpec
from .gateway import ChatRequest

ERROR_TAXONOMY = (
    ("Multi-step Arithmetic", "Drops or reorders intermediate steps in multi-part calculations"),
    ("Concept Recall", "Retrieves an adjacent but wrong fact for the concept in question"),
    ("Instruction Following", "Answers a related question instead of the one actually asked"),
)

_SAMPLE_BLOCK = re.compile(r"SAMPLE (\d+):\nUSER QUERY: (.*?)\nMODEL RESPONSE: ", re.DOTALL)
_CATEGORY_LINE = re.compile(r"\| CATEGORY: (.+)")
_STRATEGY_CATEGORY = re.compile(r"^CATEGORY: (.+)$", re.MULTILINE)
_PATTERN_EXAMPLE = re.compile(r"EXAMPLE \(sample_id=(.*?)\):\nuser: (.*?)\nassistant: (.*?)\n---", re.DOTALL)
_ERROR_EXAMPLE = re.compile(r"EXAMPLE \d+:\nQUESTION/TASK:\n(.*?)\nSTUDENT'S WRONG ANSWER:\n(.*?)\n---", re.DOTALL)
_PER_EXAMPLE_COUNT = re.compile(r"generate (\d+) synthetic samples")
_TOTAL_COUNT = re.compile(r"generate (\d+) new samples")
_STRATEGY_NAME = re.compile(r'"based_on_strategy": "(.*?)"')
_SYNTHETIC_ID = re.compile(r"SYNTHETIC sample_id=(\S+)")
_ORIGINAL_ID = re.compile(r"ORIGINAL sample_id=(\S+)")
_ARITHMETIC = re.compile(r"(-?\d+)\s*\+\s*(-?\d+)")
_QUOTED_PHRASE = re.compile(r"'([^']+)'")


def _h(*parts: object) -> int:
    text = "|".join(str(p) for p in parts)
    return int.from_bytes(hashlib.sha256(text.encode("utf-8")).digest()[:8], "big")


class DryRunProvider:
    """Rule-based deterministic chat provider covering every purpose."""

    def __init__(self, seed: int, task: TaskSpec | None = None):
        self.seed = seed
        self.task = task

    def complete(self, req: ChatRequest) -> str:
        prompt = "\n".join(str(m.get("content", "")) for m in req.messages)
        handler = {
            "student_eval": self._student,
            "error_analysis": self._analyze,
            "categorization": self._categorize,
            "strategy": self._strategies,
            "generation": self._generate,
            "quality_control": self._judge,
        }[req.purpose]
        return handler(prompt, req)

    # student -----------------------------------------------------------

    def _student(self, prompt: str, req: ChatRequest) -> str:
        h = _h("student", self.seed, req.model_id, prompt)
        kind = self.task.kind if self.task else "generic"
        if kind == "multiple_choice":
            labels = self.task.choice_labels
            return f"Considering the options, the answer is {labels[h % len(labels)]}."
        if kind == "numeric":
            marker = self.task.numeric_marker or "####"
            m = _ARITHMETIC.search(prompt)
            if m:
                value = int(m.group(1)) + int(m.group(2))
                if h % 100 >= 65:
                    value += h % 7 + 1  # a wrong but plausible total
                return f"Adding the numbers step by step.\n{marker} {value}"
            return f"{marker} {h % 1000}"
        if kind == "exact_match":
            m = _QUOTED_PHRASE.search(prompt)
            if m:
                phrase = m.group(1)
                if h % 100 >= 60:
                    phrase = f"{phrase} perhaps"
                return phrase
            return f"answer {h % 100}"
        return f"Answer {h % 100}."

    # pattern analysis ---------------------------------------------------

    def _analyze(self, prompt: str, req: ChatRequest) -> str:
        entries = []
        for idx_text, query in _SAMPLE_BLOCK.findall(prompt):
            name, cause = ERROR_TAXONOMY[_h("bucket", self.seed, query) % len(ERROR_TAXONOMY)]
            entries.append(
                {
                    "sample_idx": int(idx_text),
                    "error_cause": f"{cause}; observed on: {query.strip().splitlines()[0][:48]}",
                    "scenario_category": name,
                }
            )
        return json.dumps(entries)

    def _categorize(self, prompt: str, req: ChatRequest) -> str:
        categories = _CATEGORY_LINE.findall(prompt)
        counts: dict[str, int] = {}
        for c in categories:
            counts[c] = counts.get(c, 0) + 1
        majority = max(counts, key=lambda c: (counts[c], c)) if counts else "General"
        lines = [line for line in prompt.splitlines() if line.startswith("- [")]
        return json.dumps(
            {
                "category_name": f"{majority} Errors",
                "error_pattern": f"Systematic weakness in {majority.lower()} across {len(categories)} analyzed failures",
                "representative_samples": lines[:2],
            }
        )

    def _strategies(self, prompt: str, req: ChatRequest) -> str:
        cards = []
        for name in _STRATEGY_CATEGORY.findall(prompt):
            topic = name.replace(" Errors", "").lower()
            cards.append(
                {
                    "category_name": name,
                    "strategy_name": f"Reinforce {name.replace(' Errors', '')}",
                    "generation_approach": (
                        f"Generate one-turn question-answer pairs that exercise {topic} "
                        "with varied phrasing, difficulty, and surface form"
                    ),
                    "key_elements": [
                        "exactly one user turn and one assistant turn",
                        f"coverage of {topic}",
                        "a verifiable final answer",
                    ],
                }
            )
        return json.dumps(cards)

    # generation ----------------------------------------------------------

    def _task_shaped_sample(self, h: int, topic: str) -> tuple[str, str]:
        kind = self.task.kind if self.task else "generic"
        if kind == "numeric":
            marker = self.task.numeric_marker or "####"
            a, b = h % 47 + 2, (h >> 8) % 47 + 3
            return (
                f"On the topic of {topic}: what is {a} + {b}?",
                f"Adding {a} and {b} gives {a + b}.\n{marker} {a + b}",
            )
        if kind == "multiple_choice":
            labels = list(self.task.choice_labels)
            correct = labels[h % len(labels)]
            options = "\n".join(f"{lab}) {topic} option {(h >> (4 * j)) % 89}" for j, lab in enumerate(labels))
            return (
                f"Regarding {topic}, which option is correct?\n{options}",
                f"The answer is {correct}.",
            )
        if kind == "exact_match":
            phrase = f"{topic.split()[0] if topic.split() else 'term'} {h % 97}"
            return (f"Reply with exactly the phrase '{phrase}'.", phrase)
        return (f"Question about {topic} ({h % 89})?", f"Answer {h % 89}.")

    def _topic_from(self, text: str) -> str:
        words = [w for w in re.findall(r"[a-zA-Z]{4,}", text) if w.lower() not in ("what", "which", "exactly")]
        return (words[0].lower() if words else "the task")

    def _generate(self, prompt: str, req: ChatRequest) -> str:
        records = []
        if "IMPROVEMENT STRATEGY:" in prompt:
            per_example = int(_PER_EXAMPLE_COUNT.search(prompt).group(1))
            strategy_match = _STRATEGY_NAME.search(prompt)
            strategy_name = strategy_match.group(1) if strategy_match else "unknown"
            for example_id, user_text, _assistant in _PATTERN_EXAMPLE.findall(prompt):
                topic = self._topic_from(user_text)
                for j in range(per_example):
                    h = _h("gen-pat", self.seed, prompt, example_id, j)
                    user, assistant = self._task_shaped_sample(h, topic)
                    records.append(
                        {
                            "sample_id": f"synthetic_{h % 10**8}",
                            "is_synthetic": True,
                            "based_on_strategy": strategy_name,
                            "based_on_example": example_id,
                            "messages": [
                                {"role": "user", "content": user},
                                {"role": "assistant", "content": assistant},
                            ],
                        }
                    )
        else:
            total = int(_TOTAL_COUNT.search(prompt).group(1))
            examples = _ERROR_EXAMPLE.findall(prompt)
            for j in range(total):
                question, _wrong = examples[j % len(examples)] if examples else ("the task", "")
                h = _h("gen-err", self.seed, prompt, j)
                user, assistant = self._task_shaped_sample(h, self._topic_from(question))
                records.append(
                    {
                        "sample_id": f"synthetic_{h % 10**8}",
                        "is_synthetic": True,
                        "messages": [
                            {"role": "user", "content": user},
                            {"role": "assistant", "content": assistant},
                        ],
                    }
                )
        body = json.dumps(records)
        if _h("fence", self.seed, prompt) % 3 == 0:
            return f"```json\n{body}\n```"
        return body

    # judging -------------------------------------------------------------

    def _judge(self, prompt: str, req: ChatRequest) -> str:
        entries = []
        for original_id in _ORIGINAL_ID.findall(prompt):
            entries.append(
                {"sample_id": original_id, "type": "original", "feedback": "Reference sample."}
            )
        for synthetic_id in _SYNTHETIC_ID.findall(prompt):
            rating = 6 + _h("judge", self.seed, synthetic_id) % 4
            feedback = (
                "Vary the surface form more and keep the final answer verifiable."
                if rating <= 6
                else "Faithful to the seed example; format and difficulty look right."
            )
            entries.append(
                {
                    "sample_id": synthetic_id,
                    "type": "synthetic",
                    "quality_rating": rating,
                    "feedback": feedback,
                }
            )
        return json.dumps(entries)
