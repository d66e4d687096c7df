# %% [markdown]
# # The three task families

# %%
import numpy as np

from liferec.tasks import gen_copy_batch, gen_recall_batch, gen_ssmnist_batch, synth_strokes

rng = np.random.default_rng(0)

# %% copy: a run of 6-bit patterns, then a delimiter, then the same run back
b = gen_copy_batch(4, 1, rng)
print(b.inputs[:, 0].astype(int))
print("targets\n", b.targets[:, 0].astype(int), "emit from step", b.emit_offset)

# %% recall: item/query pairs, answer with the item after the query
b = gen_recall_batch(3, 1, rng)
print(b.inputs.shape, b.targets.shape, b.target_kind)

# %% stroke digits: synthesized pen moves, concatenated into one long sequence
corpus = synth_strokes(5, rng)
print(len(corpus), "sequences, mean length", round(corpus.mean_length(), 1))
b = gen_ssmnist_batch(2, 3, corpus, rng)
print(b.inputs.shape, "class per digit:", b.targets.argmax(axis=-1)[:, 0])
