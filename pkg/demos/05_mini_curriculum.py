# %% [markdown]
# # A short copy curriculum: fixed width, GEM, and GEM with widening
#
# Small enough to run in a few minutes on a laptop. Each variant sees the
# same batches; only the update rule and the width policy differ.

# %%
from liferec.harness import BenchmarkConfig, run_curriculum, summary_table

base = dict(distribution="copy", hidden=16, hidden_expanded=32, k=50, m=3000, c=80, max_levels=3,
            expansion_budget=3000, lr=0.003, seed=0)
variants = {
    "fixed h16": dict(),
    "gem h16": dict(use_gem=True),
    "gem + widen": dict(use_gem=True, use_expansion=True),
}

# %%
logs = {}
for name, kw in variants.items():
    logs[name] = run_curriculum(BenchmarkConfig(**base, **kw))
    log = logs[name]
    prev = log.final.prev_mean
    print(f"{name:12s} levels {log.levels_completed}  ended {log.termination_reason:9s} "
          f"prev acc {'-' if prev is None else f'{prev:.3f}'}  {log.wall_clock:.0f}s")

# %% per-level accuracy after each learned level
print(summary_table(logs["gem + widen"]))
