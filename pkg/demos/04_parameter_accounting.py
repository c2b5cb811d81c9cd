"""
How much does trimming save?
============================

Parameter counts for the built-in model profiles at a few vocabulary
sizes, and the share of each model that sits in its embedding matrices.
"""

from vocabtrim import builtin_profiles, embedding_share, load_profile, param_count

for name in builtin_profiles():
    p = load_profile(name)
    share = embedding_share(p, p.vocab_size_ref)
    print(f"{name:18s} V={p.vocab_size_ref:>7,d} d={p.d_model:<5d} "
          f"{param_count(p, p.vocab_size_ref) / 1e6:6.0f}M params, {share:5.1%} in embeddings")

# The count is affine in the vocabulary size: everything else stays fixed.
mt5 = load_profile("mt5-small")
print("\nmt5-small")
for vocab in (5_000, 30_000, 73_000, 120_000, mt5.vocab_size_ref):
    n = param_count(mt5, vocab)
    print(f"  {vocab:>7,d} tokens -> {n / 1e6:6.1f}M ({n / mt5.total_params_ref:5.1%})")
