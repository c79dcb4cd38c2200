"""Length-normalized, reference-free preference loss on a toy autoregressive policy."""

from __future__ import annotations

import csv
import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
from scipy.special import expit, log_softmax

from ospo.errors import NonFiniteLoss
from ospo.rng import stable_hash


@dataclass(frozen=True)
class SimpoConfig:
    beta: float = 10.0
    gamma: float = 5.0
    learning_rate: float = 4e-5
    epochs: int = 1
    batch_size: int | None = None  # None = full batch
    vocab_size: int = 512
    max_len: int = 32
    buckets: int = 64

    def __post_init__(self):
        if self.beta <= 0 or self.gamma < 0 or self.learning_rate < 0:
            raise ValueError("need beta > 0, gamma >= 0, learning_rate >= 0")

    @classmethod
    def paper(cls, **kw) -> "SimpoConfig":
        return cls(**{"learning_rate": 4e-5, **kw})

    @classmethod
    def toy(cls, **kw) -> "SimpoConfig":
        return cls(**{"learning_rate": 1e-2, "epochs": 200, **kw})

    @classmethod
    def preset(cls, name: str, **kw) -> "SimpoConfig":
        if name not in ("paper", "toy"):
            raise ValueError(f"unknown preset {name!r}")
        return getattr(cls, name)(**kw)


@dataclass(frozen=True)
class PreferenceRecord:
    prompt: str
    y_w: tuple[int, ...]
    y_l: tuple[int, ...]
    sample_id: str = ""
    kind: str = ""
    t_score: float | None = None

    def __post_init__(self):
        if not self.y_w or not self.y_l:
            raise ValueError("preference sequences must be non-empty")

    def to_dict(self) -> dict:
        return {"sample_id": self.sample_id, "prompt": self.prompt, "y_w": list(self.y_w), "y_l": list(self.y_l),
                "kind": self.kind, "t_score": self.t_score}

    @classmethod
    def from_dict(cls, d: dict) -> "PreferenceRecord":
        return cls(d["prompt"], tuple(d["y_w"]), tuple(d["y_l"]), d.get("sample_id", ""), d.get("kind", ""),
                   d.get("t_score"))


@dataclass
class ToyPolicy:
    """Per-(bucket, position) categorical logits; the prompt picks the bucket by stable hash."""

    theta: np.ndarray  # (B, L, V)

    @classmethod
    def zeros(cls, vocab_size: int = 512, max_len: int = 32, buckets: int = 64) -> "ToyPolicy":
        return cls(np.zeros((buckets, max_len, vocab_size), dtype=np.float64))

    @classmethod
    def random(cls, rng, vocab_size: int, max_len: int, buckets: int, scale: float = 1.0) -> "ToyPolicy":
        return cls(rng.normal(0.0, scale, size=(buckets, max_len, vocab_size)))

    @property
    def shape(self) -> tuple[int, int, int]:
        return self.theta.shape

    def bucket(self, prompt: str) -> int:
        return stable_hash(prompt, self.theta.shape[0])

    def check(self, y) -> None:
        _, L, V = self.theta.shape
        if len(y) > L or min(y) < 0 or max(y) >= V:
            raise ValueError(f"sequence outside policy bounds (L={L}, V={V})")

    def _rows(self, prompt: str, y):
        self.check(y)
        b = self.bucket(prompt)
        logp = log_softmax(self.theta[b, :len(y)], axis=-1)
        return b, logp

    def logprob(self, prompt: str, y) -> float:
        _, logp = self._rows(prompt, y)
        return float(math.fsum(logp[np.arange(len(y)), list(y)]))

    def copy(self) -> "ToyPolicy":
        return ToyPolicy(self.theta.copy())


def _pad(policy: ToyPolicy, seqs) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Padded token ids, a validity mask and the lengths of ``seqs``."""
    L = policy.theta.shape[1]
    ids = np.zeros((len(seqs), L), dtype=np.int64)
    mask = np.zeros((len(seqs), L), dtype=bool)
    for i, y in enumerate(seqs):
        policy.check(y)
        ids[i, :len(y)] = y
        mask[i, :len(y)] = True
    return ids, mask, mask.sum(axis=1)


def simpo_loss(policy: ToyPolicy, batch, cfg: SimpoConfig, with_grad: bool = True):
    """Mean of -log sigmoid(beta * (r_w - r_l) - gamma) over ``batch`` and its gradient in θ.

    r = log π(y | x) / |y|. Returns ``(loss, grad, margins)``; margins are
    beta * (r_w - r_l) per record. Reductions run in a fixed order.
    """
    batch = list(batch)
    if not batch:
        raise ValueError("empty batch")
    n = len(batch)
    L = policy.theta.shape[1]
    buckets = np.array([policy.bucket(rec.prompt) for rec in batch], dtype=np.int64)
    used, local = np.unique(buckets, return_inverse=True)
    logp = log_softmax(policy.theta[used], axis=-1)  # (len(used), L, V)
    pos = np.arange(L)[None, :]
    sides = []
    for seqs in ([rec.y_w for rec in batch], [rec.y_l for rec in batch]):
        ids, mask, lengths = _pad(policy, seqs)
        tok = np.where(mask, logp[local[:, None], pos, ids], 0.0)
        sides.append((ids, mask, lengths, tok.sum(axis=1) / lengths))
    r_w, r_l = sides[0][3], sides[1][3]
    margins = cfg.beta * (r_w - r_l)
    z = margins - cfg.gamma
    with np.errstate(invalid="ignore", over="ignore"):
        loss = float(np.logaddexp(0.0, -z).sum() / n)
    if not math.isfinite(loss):
        raise NonFiniteLoss(f"non-finite loss {loss}")
    grad = None
    if with_grad:
        coef = -expit(-z) * cfg.beta / n  # d(loss) / d(r_w - r_l) per record
        grad = np.zeros_like(policy.theta)
        weight = np.zeros((len(used), L))
        for sign, (ids, mask, lengths, _) in zip((1.0, -1.0), sides):
            c = sign * coef / lengths  # per-token weight of each record
            rows, cols = np.nonzero(mask)
            np.add.at(grad, (buckets[rows], cols, ids[rows, cols]), c[rows])
            np.add.at(weight, (local[rows], cols), c[rows])
        grad[used] -= weight[:, :, None] * np.exp(logp)
        if not np.all(np.isfinite(grad)):
            raise NonFiniteLoss("non-finite gradient")
    return loss, grad, [float(m) for m in margins]


@dataclass
class TrainResult:
    policy: ToyPolicy
    trace: list[dict] = field(default_factory=list)


def train(policy: ToyPolicy, dataset, cfg: SimpoConfig) -> TrainResult:
    """Plain gradient descent with a constant learning rate.

    ``trace[k]`` holds the full-dataset loss and mean margin after ``k``
    updates, so ``trace[0]`` is the starting point.
    """
    dataset = list(dataset)
    if not dataset:
        raise ValueError("empty dataset")
    policy = policy.copy()
    size = cfg.batch_size or len(dataset)
    full_batch = size >= len(dataset)
    trace = []

    def evaluate(step, with_grad):
        try:
            out = simpo_loss(policy, dataset, cfg, with_grad)
        except NonFiniteLoss as exc:
            raise NonFiniteLoss(str(exc), step) from None
        trace.append({"step": step, "loss": out[0], "mean_margin": math.fsum(out[2]) / len(out[2])})
        return out[1]

    step = 0
    grad = evaluate(0, full_batch)
    for _ in range(cfg.epochs):
        if full_batch:
            policy.theta -= cfg.learning_rate * grad
            step += 1
            grad = evaluate(step, True)
            continue
        for start in range(0, len(dataset), size):
            try:
                _, g, _ = simpo_loss(policy, dataset[start:start + size], cfg)
            except NonFiniteLoss as exc:
                raise NonFiniteLoss(str(exc), step + 1) from None
            policy.theta -= cfg.learning_rate * g
            step += 1
        evaluate(step, False)
    return TrainResult(policy, trace)


def save_checkpoint(policy: ToyPolicy, path, step: int) -> None:
    """Flat little-endian float64 tensor at ``path`` plus a JSON header at ``path.json``."""
    path = Path(path)
    B, L, V = policy.theta.shape
    path.write_bytes(policy.theta.astype("<f8").tobytes())
    Path(str(path) + ".json").write_text(json.dumps({"V": V, "L": L, "B": B, "step": step, "dtype": "<f8"},
                                                    sort_keys=True))


def load_checkpoint(path) -> tuple[ToyPolicy, int]:
    path = Path(path)
    header = json.loads(Path(str(path) + ".json").read_text())
    theta = np.frombuffer(path.read_bytes(), dtype=header["dtype"]).astype(np.float64)
    return ToyPolicy(theta.reshape(header["B"], header["L"], header["V"]).copy()), header["step"]


def write_trace_csv(trace, path) -> None:
    with open(path, "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(["step", "loss", "mean_margin"])
        for row in trace:
            w.writerow([row["step"], repr(row["loss"]), repr(row["mean_margin"])])


def config_dict(cfg: SimpoConfig) -> dict:
    return asdict(cfg)
