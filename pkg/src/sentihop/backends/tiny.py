"""A small trainable GRU encoder-decoder with dot-product attention.

Word-level vocabulary, teacher-forced token-mean cross-entropy, greedy
decoding. Sized for desk-scale runs: a few million parameters, CPU-friendly.
"""

from __future__ import annotations

import json
import re
from pathlib import Path
from typing import Iterable, Sequence

import torch
import torch.nn as nn
import torch.nn.functional as F

from .base import BatchLoss, Seq2SeqBackend

_TOKEN = re.compile(r"\w+|[^\w\s]")

PAD, BOS, EOS, UNK = 0, 1, 2, 3
_SPECIALS = ("<pad>", "<bos>", "<eos>", "<unk>")


def tokenize(text: str) -> list[str]:
    return _TOKEN.findall(text)


class Vocab:
    def __init__(self, tokens: list[str]):
        self.itos = list(_SPECIALS) + tokens
        self.stoi = {tok: i for i, tok in enumerate(self.itos)}

    @classmethod
    def build(cls, texts: Iterable[str], max_size: int | None = None) -> "Vocab":
        counts: dict[str, int] = {}
        for text in texts:
            for tok in tokenize(text):
                counts[tok] = counts.get(tok, 0) + 1
        ordered = sorted(counts, key=lambda t: (-counts[t], t))
        if max_size is not None:
            ordered = ordered[: max(0, max_size - len(_SPECIALS))]
        return cls(ordered)

    def encode(self, text: str, max_len: int, add_eos: bool = False) -> list[int]:
        ids = [self.stoi.get(tok, UNK) for tok in tokenize(text)]
        budget = max_len - (1 if add_eos else 0)
        ids = ids[:budget]
        if add_eos:
            ids.append(EOS)
        return ids

    def decode(self, ids: Sequence[int]) -> str:
        words = []
        for i in ids:
            if i == EOS:
                break
            if i in (PAD, BOS):
                continue
            words.append(self.itos[i] if i < len(self.itos) else "<unk>")
        return " ".join(words)

    def __len__(self) -> int:
        return len(self.itos)


class _AttnSeq2Seq(nn.Module):
    def __init__(self, vocab_size: int, d_model: int, hidden: int):
        super().__init__()
        self.src_emb = nn.Embedding(vocab_size, d_model, padding_idx=PAD)
        self.tgt_emb = nn.Embedding(vocab_size, d_model, padding_idx=PAD)
        self.encoder = nn.GRU(d_model, hidden, batch_first=True)
        self.decoder = nn.GRU(d_model, hidden, batch_first=True)
        self.combine = nn.Linear(2 * hidden, hidden)
        self.out = nn.Linear(hidden, vocab_size)

    def encode(self, src: torch.Tensor) -> tuple[torch.Tensor, torch.Tensor, torch.Tensor]:
        mask = src.ne(PAD)  # (B, S)
        enc_out, h_n = self.encoder(self.src_emb(src))
        return enc_out, h_n, mask

    def _attend(
        self, dec_out: torch.Tensor, enc_out: torch.Tensor, mask: torch.Tensor
    ) -> torch.Tensor:
        scores = torch.bmm(dec_out, enc_out.transpose(1, 2))  # (B, T, S)
        scores = scores.masked_fill(~mask.unsqueeze(1), float("-inf"))
        attn = torch.softmax(scores, dim=-1)
        context = torch.bmm(attn, enc_out)  # (B, T, H)
        return torch.tanh(self.combine(torch.cat([dec_out, context], dim=-1)))

    def forward(self, src: torch.Tensor, tgt_in: torch.Tensor) -> torch.Tensor:
        enc_out, h_n, mask = self.encode(src)
        dec_out, _ = self.decoder(self.tgt_emb(tgt_in), h_n)
        return self.out(self._attend(dec_out, enc_out, mask))

    def decode_step(
        self,
        tok: torch.Tensor,
        hidden: torch.Tensor,
        enc_out: torch.Tensor,
        mask: torch.Tensor,
    ) -> tuple[torch.Tensor, torch.Tensor]:
        dec_out, hidden = self.decoder(self.tgt_emb(tok), hidden)
        logits = self.out(self._attend(dec_out, enc_out, mask))
        return logits[:, -1, :], hidden


class TinyGRUSeq2Seq(Seq2SeqBackend):
    def __init__(
        self,
        vocab: Vocab,
        d_model: int = 96,
        hidden: int = 192,
        learning_rate: float = 2e-3,
        max_input_tokens: int = 64,
        max_target_tokens: int = 96,
        seed: int = 0,
        grad_clip: float = 1.0,
    ):
        self.vocab = vocab
        self.d_model = d_model
        self.hidden = hidden
        self.learning_rate = learning_rate
        self.max_input_tokens = max_input_tokens
        self.max_target_tokens = max_target_tokens
        self.seed = seed
        self.grad_clip = grad_clip
        torch.manual_seed(seed)
        self.model = _AttnSeq2Seq(len(vocab), d_model, hidden)
        self.optimizer = torch.optim.Adam(self.model.parameters(), lr=learning_rate)

    @classmethod
    def from_texts(cls, texts: Iterable[str], **kwargs) -> "TinyGRUSeq2Seq":
        return cls(Vocab.build(texts), **kwargs)

    def n_parameters(self) -> int:
        return sum(p.numel() for p in self.model.parameters())

    def _pad_batch(self, rows: list[list[int]]) -> torch.Tensor:
        width = max(1, max((len(r) for r in rows), default=1))
        out = torch.full((len(rows), width), PAD, dtype=torch.long)
        for i, row in enumerate(rows):
            out[i, : len(row)] = torch.tensor(row, dtype=torch.long)
        return out

    def loss_batch(self, inputs: Sequence[str], targets: Sequence[str]) -> BatchLoss:
        if len(inputs) != len(targets) or not inputs:
            raise ValueError("inputs and targets must be equal-length and non-empty")
        src = self._pad_batch(
            [self.vocab.encode(t, self.max_input_tokens) or [UNK] for t in inputs]
        )
        tgt = [self.vocab.encode(t, self.max_target_tokens, add_eos=True) for t in targets]
        tgt_in = self._pad_batch([[BOS] + row[:-1] for row in tgt])
        tgt_out = self._pad_batch(tgt)
        self.model.train()
        logits = self.model(src, tgt_in)
        loss = F.cross_entropy(
            logits.reshape(-1, logits.size(-1)), tgt_out.reshape(-1), ignore_index=PAD
        )
        return BatchLoss(loss.item(), payload=loss)

    def apply_update(self, weighted: Sequence[tuple[BatchLoss, float]]) -> None:
        total = None
        for batch_loss, coeff in weighted:
            if batch_loss.payload is None:
                continue
            term = coeff * batch_loss.payload
            total = term if total is None else total + term
        if total is None:
            return
        self.optimizer.zero_grad()
        total.backward()
        nn.utils.clip_grad_norm_(self.model.parameters(), self.grad_clip)
        self.optimizer.step()

    @torch.no_grad()
    def generate(self, inputs: Sequence[str], max_new_tokens: int) -> list[str]:
        if not inputs:
            return []
        self.model.eval()
        src = self._pad_batch(
            [self.vocab.encode(t, self.max_input_tokens) or [UNK] for t in inputs]
        )
        enc_out, hidden, mask = self.model.encode(src)
        batch = src.size(0)
        tok = torch.full((batch, 1), BOS, dtype=torch.long)
        done = torch.zeros(batch, dtype=torch.bool)
        rows: list[list[int]] = [[] for _ in range(batch)]
        for _ in range(max_new_tokens):
            logits, hidden = self.model.decode_step(tok, hidden, enc_out, mask)
            nxt = logits.argmax(dim=-1)  # (B,)
            for i in range(batch):
                if not done[i]:
                    if nxt[i].item() == EOS:
                        done[i] = True
                    else:
                        rows[i].append(int(nxt[i].item()))
            if bool(done.all()):
                break
            tok = nxt.unsqueeze(1)
        return [self.vocab.decode(row) for row in rows]

    def save(self, directory: str | Path) -> None:
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        torch.save(self.model.state_dict(), directory / "weights.pt")
        (directory / "vocab.json").write_text(
            json.dumps(self.vocab.itos, ensure_ascii=False), encoding="utf-8"
        )
        hparams = {
            "kind": "tiny-gru",
            "d_model": self.d_model,
            "hidden": self.hidden,
            "learning_rate": self.learning_rate,
            "max_input_tokens": self.max_input_tokens,
            "max_target_tokens": self.max_target_tokens,
            "seed": self.seed,
            "grad_clip": self.grad_clip,
        }
        (directory / "hparams.json").write_text(json.dumps(hparams, indent=2), encoding="utf-8")

    @classmethod
    def load(cls, directory: str | Path) -> "TinyGRUSeq2Seq":
        directory = Path(directory)
        hparams = json.loads((directory / "hparams.json").read_text(encoding="utf-8"))
        itos = json.loads((directory / "vocab.json").read_text(encoding="utf-8"))
        vocab = Vocab(itos[len(_SPECIALS):])
        backend = cls(
            vocab,
            d_model=hparams["d_model"],
            hidden=hparams["hidden"],
            learning_rate=hparams["learning_rate"],
            max_input_tokens=hparams["max_input_tokens"],
            max_target_tokens=hparams["max_target_tokens"],
            seed=hparams["seed"],
            grad_clip=hparams["grad_clip"],
        )
        backend.model.load_state_dict(torch.load(directory / "weights.pt", weights_only=True))
        return backend
