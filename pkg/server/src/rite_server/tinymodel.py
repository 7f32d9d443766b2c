"""Build a tiny randomly initialized causal LM for offline smoke testing.

Creates a character-level fast tokenizer (clean one-token-per-character
offset mapping) and a small GPT-2 with seeded random weights, then
saves both in standard Hugging Face format. The result is a real causal
LM on the real serving stack that needs no network access; its outputs
are deterministic but meaningless.

Usage: python -m rite_server.tinymodel <output-dir> [--seed N]
"""

from __future__ import annotations

import argparse

CHAR_VOCAB = (
    [chr(c) for c in range(32, 127)]
    + ["\n", "\t", "é", "ß", "中", "—"]
)


def build_tiny_model(
    out_dir: str,
    seed: int = 0,
    n_embd: int = 32,
    n_layer: int = 2,
    n_head: int = 2,
    n_positions: int = 128,
) -> str:
    import torch
    from tokenizers import Regex, Tokenizer, models, pre_tokenizers
    from transformers import GPT2Config, GPT2LMHeadModel, PreTrainedTokenizerFast

    vocab = {"<unk>": 0, "<eos>": 1}
    for ch in CHAR_VOCAB:
        vocab[ch] = len(vocab)
    tok = Tokenizer(models.WordLevel(vocab, unk_token="<unk>"))
    tok.pre_tokenizer = pre_tokenizers.Split(Regex("[\\s\\S]"), behavior="isolated")
    fast = PreTrainedTokenizerFast(
        tokenizer_object=tok, unk_token="<unk>", eos_token="<eos>"
    )

    config = GPT2Config(
        vocab_size=len(vocab),
        n_positions=n_positions,
        n_embd=n_embd,
        n_layer=n_layer,
        n_head=n_head,
        bos_token_id=1,
        eos_token_id=1,
    )
    torch.manual_seed(seed)
    model = GPT2LMHeadModel(config)
    model.eval()

    fast.save_pretrained(out_dir)
    model.save_pretrained(out_dir)
    return out_dir


def main(argv: list[str] | None = None) -> None:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("out_dir")
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args(argv)
    build_tiny_model(args.out_dir, seed=args.seed)
    print(args.out_dir)


if __name__ == "__main__":
    main()
