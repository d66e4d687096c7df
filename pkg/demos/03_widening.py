# %% [markdown]
# # Widening a trained LSTM without changing what it computes

# %%
import numpy as np

from liferec.expand import NoiseSpec, make_mapping, widen_lstm, zero_sum_noise
from liferec.model import forward_sequence, init_params
from liferec.tasks import gen_copy_batch

rng = np.random.default_rng(0)
teacher = init_params(16, 8, 7, rng)
probe = [gen_copy_batch(20, 10, np.random.default_rng(i)) for i in range(5)]

# %% the mapping keeps the old units in place and draws the new ones from them
plan = make_mapping(4, 7, rng)
print(plan.mapping, plan.counts)

# %% duplicate groups receive noise that sums to zero, so the outputs cancel
z = zero_sum_noise(3, 4, 1.0, rng)
print(z.round(3), z.sum(axis=1))

# %% exact mode: output drift is rounding noise
student, report = widen_lstm(teacher, 32, NoiseSpec("exact", 0.01), rng, probe_batches=probe)
print(report.to_text())

# %% without noise the duplicated columns make the recurrent matrix singular
bare, report0 = widen_lstm(teacher, 32, NoiseSpec("exact", 0.0), np.random.default_rng(1))
print(report0.to_text())

# %% preconditioned mode also jitters the copied gate rows, trading a small drift
pre, report1 = widen_lstm(teacher, 32, NoiseSpec("preconditioned", 0.01), np.random.default_rng(1),
                          probe_batches=probe)
print(report1.to_text())
x = probe[0]
print("max |logit diff|", np.abs(forward_sequence(teacher, x) - forward_sequence(pre, x)).max())
