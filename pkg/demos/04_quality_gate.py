"""The quality gate in action: reject, feed back, regenerate, accept or drop."""

import json

from augloop import Gateway, Message, PromptLibrary, ProviderBinding, QualityController, Sample
from augloop.generation import GenerationBatch
from augloop.analysis import StrategyCard


class ImprovingJudge:
    """Scores rise once feedback has been incorporated (attempt count grows)."""

    def __init__(self):
        self.calls = 0

    def complete(self, req):
        self.calls += 1
        rating = [5, 6, 8][min(self.calls - 1, 2)]
        prompt = req.messages[0]["content"]
        ids = [line.split("=", 1)[1] for line in prompt.splitlines() if line.startswith("SYNTHETIC sample_id=")]
        return json.dumps(
            [
                {"sample_id": sid, "type": "synthetic", "quality_rating": rating,
                 "feedback": f"attempt {self.calls}: vary the phrasing more"}
                for sid in ids
            ]
        )


def synthetic(i: int) -> Sample:
    return Sample(
        id=f"synthetic_{i}",
        messages=(Message("user", f"variant {i}?"), Message("assistant", f"#### {i}")),
        origin="synthetic",
        split="train",
        based_on_strategy="Drill Addition",
        based_on_example="train_0",
    )


seed = Sample(id="train_0", messages=(Message("user", "what is 2 + 3?"), Message("assistant", "#### 5")), split="train")
card = StrategyCard(
    category_name="Arithmetic Errors",
    error_pattern="drops carries",
    representative_samples=(),
    strategy_name="Drill Addition",
    generation_approach="Generate addition drills",
    key_elements=("one-turn",),
    cluster_index=0,
)

judge = ImprovingJudge()
binding = ProviderBinding(endpoint="scripted://", model_id="judge-model")
gateway = Gateway({"quality_control": (binding, judge)})
controller = QualityController(gateway, PromptLibrary(), threshold=7.0, max_attempts=3)

produced = []


def producer(batch: GenerationBatch):
    produced.append(batch)
    print(f"attempt {batch.attempt}: generating with feedback = {batch.feedback!r}")
    return [synthetic(10 * batch.attempt + j) for j in range(3)]


batch = GenerationBatch(branch="pattern", requested=3, seed_samples=(seed,), strategy=card)
samples, history = controller.qc_gate(producer, batch)

print("\nverdicts:")
for verdict in history:
    print(f"  attempt {verdict.attempt}: score {verdict.batch_score:.1f} accepted={verdict.accepted}")
print(f"\naccepted samples: {[s.id for s in samples]}")
