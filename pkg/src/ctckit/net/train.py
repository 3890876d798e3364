"""Training loop: batching, curriculum, checkpoints, and per-epoch metrics."""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..alphabet import Alphabet
from ..ctc import LogProbLattice, ctc_loss, greedy_decode
from ..scoring import cer
from ..segctc import SegCtcConfig, seg_ctc_loss
from .model import Model
from .optim import make_optimizer


class DivergenceError(RuntimeError):
    pass


@dataclass
class Utterance:
    utt_id: str
    feats: np.ndarray  # T x F
    targets: list[int]


@dataclass(frozen=True)
class TrainConfig:
    optimizer: dict = field(default_factory=lambda: {"kind": "adam", "lr": 1e-3})
    lr_decay: float = 1.0  # multiplied in after every epoch
    batch_size: int = 4
    epochs: int = 5
    sortagrad: bool = False
    seed: int = 0
    loss: str = "ctc"  # ctc | segctc
    segctc: SegCtcConfig = field(default_factory=SegCtcConfig)

    def __post_init__(self):
        if float(self.optimizer.get("lr", 1e-3)) <= 0:
            raise ValueError("learning rate must be positive")
        if not 0.0 <= self.lr_decay <= 1.0:
            raise ValueError("lr_decay must lie in [0, 1]")
        if self.loss not in ("ctc", "segctc"):
            raise ValueError(f"unknown loss {self.loss!r}")
        if self.batch_size < 1 or self.epochs < 0:
            raise ValueError("batch_size must be >= 1 and epochs >= 0")


@dataclass
class EpochMetrics:
    epoch: int
    loss: float
    greedy_cer: float
    lr: float
    seg_fraction: float = 0.0
    mean_word_len: float = 0.0


def epoch_order(rng, dataset, epoch: int, sortagrad: bool) -> list[int]:
    """Sortagrad sorts epoch 0 by ascending length; later epochs shuffle."""
    if epoch == 0 and sortagrad:
        return sorted(range(len(dataset)), key=lambda i: dataset[i].feats.shape[0])
    return [int(i) for i in rng.permutation(len(dataset))]


def greedy_cer(model: Model, dataset, alphabet: Alphabet) -> float:
    refs, hyps = {}, {}
    for utt in dataset:
        lattice = LogProbLattice(model.forward(utt.feats, train=False), alphabet)
        refs[utt.utt_id] = alphabet.decode(utt.targets)
        hyps[utt.utt_id] = greedy_decode(lattice)
    rate = cer(refs, hyps).wer
    return float("nan") if rate is None else rate


def train(
    model: Model,
    dataset: list[Utterance],
    cfg: TrainConfig,
    alphabet: Alphabet,
    out_dir=None,
    start_epoch: int = 0,
) -> list[EpochMetrics]:
    """Run the training schedule; returns one metrics row per epoch.

    With ``out_dir`` set, every epoch persists a checkpoint plus appends to
    ``metrics.tsv`` (epoch, loss, greedy_cer, lr) and a line-oriented
    ``train.log`` carrying the segmentation diagnostics.
    """
    if not dataset:
        raise ValueError("training dataset is empty")
    rng = np.random.default_rng(cfg.seed)
    opt = make_optimizer(cfg.optimizer)
    out_dir = Path(out_dir) if out_dir is not None else None
    if out_dir is not None:
        out_dir.mkdir(parents=True, exist_ok=True)

    history = []
    for epoch in range(start_epoch, start_epoch + cfg.epochs):
        order = epoch_order(rng, dataset, epoch, cfg.sortagrad)
        losses = []
        segmented = 0
        word_lens = []
        for b0 in range(0, len(order), cfg.batch_size):
            batch = [dataset[i] for i in order[b0 : b0 + cfg.batch_size]]
            model.zero_grad()
            batch_losses = []
            for utt in batch:
                lattice = LogProbLattice(
                    model.forward(utt.feats, train=True, rng=rng), alphabet
                )
                if cfg.loss == "segctc":
                    res = seg_ctc_loss(lattice, utt.targets, cfg.segctc, epoch=epoch)
                    if res.diagnostics.get("segmented"):
                        segmented += 1
                        word_lens.append(res.diagnostics["word_len"])
                else:
                    res = ctc_loss(lattice, utt.targets)
                batch_losses.append(res.loss)
                model.backward(res.grad / len(batch))
            batch_loss = float(np.mean(batch_losses))
            if not np.isfinite(batch_loss):
                raise DivergenceError(
                    f"non-finite loss in epoch {epoch}, batch starting at "
                    f"utterance {order[b0]} ({batch[0].utt_id})"
                )
            losses.extend(batch_losses)
            opt.step(model.params, model.grads)
            model.step += 1

        metrics = EpochMetrics(
            epoch=epoch,
            loss=float(np.mean(losses)),
            greedy_cer=greedy_cer(model, dataset, alphabet),
            lr=opt.lr,
            seg_fraction=segmented / len(dataset),
            mean_word_len=float(np.mean(word_lens)) if word_lens else 0.0,
        )
        history.append(metrics)
        if out_dir is not None:
            model.save_checkpoint(out_dir / f"epoch-{epoch:03d}.ckpt")
            model.save_checkpoint(out_dir / "final.ckpt")
            with open(out_dir / "metrics.tsv", "a", encoding="utf-8") as fh:
                fh.write(
                    f"{metrics.epoch}\t{metrics.loss:.6f}\t"
                    f"{metrics.greedy_cer:.4f}\t{metrics.lr:.8g}\n"
                )
            with open(out_dir / "train.log", "a", encoding="utf-8") as fh:
                fh.write(
                    f"epoch {metrics.epoch}: loss {metrics.loss:.6f} "
                    f"greedy_cer {metrics.greedy_cer:.4f}% lr {metrics.lr:.8g} "
                    f"seg_fraction {metrics.seg_fraction:.4f} "
                    f"mean_word_len {metrics.mean_word_len:.2f}\n"
                )
        opt.lr *= cfg.lr_decay
    return history
