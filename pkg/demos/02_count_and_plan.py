"""
Counting a corpus and planning a trim
=====================================

Count token frequencies over a small "target language" corpus, then build
an all-observed plan and a top-n plan and compare what they keep.
"""

import random

from vocabtrim import (
    AllObserved,
    ModelKind,
    PieceEntry,
    PreTokenizer,
    TokenizerSpec,
    TopN,
    apply_plan_to_ids,
    count_corpus,
    encode_text,
    make_plan,
    save_plan,
)

# A BPE vocabulary over two "languages": one written with a-e, one with v-z.
rng = random.Random(0)
chars = list("abcdevwxyz")
tokens, merges = ["<s>", "<unk>"] + chars, []
for left, right in [("a", "b"), ("ab", "c"), ("v", "w"), ("vw", "x"), ("d", "e"), ("y", "z")]:
    merges.append((left, right))
    tokens.append(left + right)
spec = TokenizerSpec(
    ModelKind.BPE, [PieceEntry(t, float(i)) for i, t in enumerate(tokens)], merges=merges,
    special_tokens=[("<s>", 0), ("<unk>", 1)], unk_id=1, pre_tokenizer=PreTokenizer("Whitespace"),
)

# The corpus only uses the first language.
corpus = [" ".join("".join(rng.choice("abcde") for _ in range(rng.randint(1, 6)))
                   for _ in range(8)) for _ in range(200)]
table = count_corpus(corpus, spec)
print(f"{table.docs_seen} lines, {table.tokens_seen} tokens, {table.distinct} distinct of {spec.vocab_size}")

# Keep everything that was seen, plus the special tokens and every merge
# ancestor a kept token needs.
plan = make_plan(table, AllObserved(), spec)
print("all-observed keeps", [spec.tokens[i] for i in plan.kept])
print("reasons:", plan.reason_counts())

# The trimmed tokenizer reproduces the original encoding, renumbered.
line = corpus[0]
assert apply_plan_to_ids(encode_text(line, spec), plan) == encode_text(line, plan.trimmed_spec)

# A top-n budget counts the mandatory tokens too, so the result has exactly n rows.
small = make_plan(table, TopN(8), spec)
print("top-8 keeps", [spec.tokens[i] for i in small.kept])
print(save_plan(small).decode())
