"""Train the generator briefly, then apply the scenario edits.

Short runs already follow content-duration edits.  Pauses are learned
later; pass 2500 steps (the acceptance setting, about ten CPU minutes) to
see them land.

Run: python demos/03_train_and_edit.py [steps]
"""

import sys

from tokentiming.bench import realize_cases, scenario_summary
from tokentiming.editing import scenario_suite
from tokentiming.training import TrainConfig, Trainer
from tokentiming.world import World, gen_corpus

steps = int(sys.argv[1]) if len(sys.argv) > 1 else 400
world = World()
corpus = gen_corpus(world, 200, seed=0)
trainer = Trainer(world, corpus, TrainConfig(steps=steps))


def report(step, loss):
    if step % 100 == 0:
        print(f"step {step:5d}  loss {loss:.4f}")


trainer.run(callback=report)

scenarios = scenario_suite(rate=world.frame_rate)
cases = realize_cases(trainer.net.eval(), world, [c for s in scenarios for c in s.cases()], n_steps=8)
for case in cases:
    if case.realized:
        a, b = case.span
        field = "pause" if case.is_pause else "content"
        print(f"{case.case_id:24s} asked {getattr(case.edited, field)[a:b].tolist()} "
              f"got {getattr(case.realized_edited, field)[a:b].tolist()} (baseline gave "
              f"{getattr(case.realized_baseline, field)[a:b].tolist()})")
    else:
        print(f"{case.case_id:24s} alignment failed")
s = scenario_summary(scenarios, cases)
print(f"baseline content error {s.baseline_error_ms:.1f} ms of {s.baseline_target_ms:.1f} ms")
