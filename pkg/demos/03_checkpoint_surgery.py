"""
Slicing a checkpoint
====================

Write a toy safetensors-style checkpoint, trim its vocabulary-indexed
tensors with a plan and check that every kept row survives bit for bit.
"""

import numpy as np

from vocabtrim import (
    FrequencyTable,
    ModelKind,
    ModelProfile,
    PieceEntry,
    TensorRecord,
    TensorStore,
    TokenizerSpec,
    VocabTensor,
    build_plan,
    read_container,
    trim_checkpoint,
    write_container,
)

V, d = 12, 4
rng = np.random.default_rng(0)
store = TensorStore({
    "embed.weight": TensorRecord.from_array(rng.standard_normal((V, d)).astype(np.float32)),
    "lm_head.weight": TensorRecord.from_array(rng.standard_normal((V, d)).astype(np.float32)),
    "lm_head.bias": TensorRecord.from_array(np.arange(V, dtype=np.float32)),
    "layer.0.weight": TensorRecord.from_array(rng.standard_normal((d, d)).astype(np.float32)),
}, metadata={"format": "pt"})
blob = write_container(store)
print(f"checkpoint: {len(blob)} bytes, {store.num_params()} parameters")

# The profile says which tensors have a vocabulary axis. Patterns ending in
# "*" match by prefix.
profile = ModelProfile(
    name="toy", d_model=d, vocab_size_ref=V,
    vocab_tensors=(VocabTensor("embed.weight", 0), VocabTensor("lm_head.*", 0)),
    total_params_ref=store.num_params(),
    tied_groups=(("embed.weight", "lm_head.weight"),),
)

spec = TokenizerSpec(ModelKind.UNIGRAM, [PieceEntry(f"tok{i}", -1.0) for i in range(V)])
kept = [0, 3, 4, 7, 11]
plan = build_plan(kept, FrequencyTable.zeros(spec), spec)

small = trim_checkpoint(read_container(blob), profile, plan)
for name in sorted(small.tensors):
    print(f"{name:15s} {store[name].shape} -> {small[name].shape}")

# Row i of the trimmed matrix is row kept[i] of the original.
before = store["embed.weight"].to_array()
after = small["embed.weight"].to_array()
assert np.array_equal(after, before[kept])
print("bias after trim:", small["lm_head.bias"].to_array())
assert small["layer.0.weight"] == store["layer.0.weight"]
