"""Offline training on .ifr datasets with .ifw export.

The recipe: class-weighted cross entropy (minority class weighted up by
default), Adam with L2 weight decay, dropout per the network defaults,
stratified 80/20 train/validation split, scalar normalization statistics
computed on the training split and embedded in the exported bundle. For
transfer learning, block 1 can be frozen so its tensors survive
fine-tuning byte for byte.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import torch
from torch import nn
from torch.utils.data import DataLoader, Dataset

from .ifr import IfrReader
from .ifw import Bundle, load as load_bundle_file
from .net import InterferenceNet

SUPPORTED_BATCH = (16, 32, 64, 128)
PRODUCTION_FILTERS = ((64, 128), (128, 256))
PRODUCTION_GRID = (14, 3276)


@dataclass
class TrainConfig:
    alpha: int
    beta: int
    gamma: int = 32             # batch size
    n_classes: int = 2
    epochs: int = 8
    lr: float = 1e-3
    dropout: tuple = (0.25, 0.25, 0.5)
    l2: float = 1e-4
    class_weights: tuple | None = None   # None => inverse-frequency
    tl_base: str | None = None
    freeze_block1: bool = False
    val_fraction: float = 0.2
    seed: int = 0

    def __post_init__(self):
        if self.gamma not in SUPPORTED_BATCH:
            raise ValueError(f"batch size {self.gamma} not in "
                             f"{SUPPORTED_BATCH}")
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if len(self.dropout) != 3 \
                or any(not 0 <= p < 1 for p in self.dropout):
            raise ValueError("dropout must be three rates in [0, 1)")
        if self.class_weights is not None \
                and any(w <= 0 for w in self.class_weights):
            raise ValueError("class weights must be positive")
        if self.freeze_block1 and not self.tl_base:
            raise ValueError("freeze_block1 requires a tl_base bundle")


@dataclass
class TrainReport:
    val_accuracy: float
    epoch_val_accuracy: list = field(default_factory=list)
    train_records: int = 0
    val_records: int = 0
    class_counts: tuple = ()


class SlotDataset(Dataset):
    """Lazy per-record reads so large datasets never sit in memory."""

    def __init__(self, reader: IfrReader, indices, targets, norm_mean,
                 norm_std):
        self.reader = reader
        self.indices = np.asarray(indices)
        self.targets = np.asarray(targets)
        self.norm_mean = norm_mean.astype(np.float32)
        self.norm_std = norm_std.astype(np.float32)

    def __len__(self):
        return len(self.indices)

    def __getitem__(self, i):
        record = self.reader.read(int(self.indices[i]))
        iq = np.moveaxis(record.iq.astype(np.float32), -1, 0)
        scalars = (record.scalars - self.norm_mean) / self.norm_std
        return (torch.from_numpy(np.ascontiguousarray(iq)),
                torch.from_numpy(scalars),
                int(self.targets[i]))


def record_targets(reader: IfrReader, n_classes: int) -> np.ndarray:
    pairs = reader.labels()
    return pairs[:, 1] if n_classes == 6 else pairs[:, 0]


def stratified_split(targets, val_fraction: float, seed: int):
    rng = np.random.default_rng(seed)
    train_idx, val_idx = [], []
    for cls in np.unique(targets):
        members = np.flatnonzero(targets == cls)
        rng.shuffle(members)
        n_val = max(1, int(round(val_fraction * members.size)))
        val_idx.extend(members[:n_val])
        train_idx.extend(members[n_val:])
    return np.sort(train_idx), np.sort(val_idx)


def scalar_stats(reader: IfrReader, indices):
    acc = np.zeros((len(indices), reader.info.n_scalars), dtype=np.float64)
    for row, i in enumerate(indices):
        acc[row] = reader.read_scalars(int(i))
    mean = acc.mean(axis=0)
    std = acc.std(axis=0)
    std = np.where(std < 1e-6, 1.0, std)  # constant features stay centered
    return mean.astype(np.float32), std.astype(np.float32)


def inverse_frequency_weights(targets, n_classes: int) -> np.ndarray:
    counts = np.bincount(targets, minlength=n_classes).astype(np.float64)
    counts = np.where(counts == 0, 1.0, counts)
    weights = targets.size / (n_classes * counts)
    return weights.astype(np.float32)


def _accuracy(model, loader) -> float:
    model.eval()
    hits = total = 0
    with torch.no_grad():
        for iq, scalars, target in loader:
            pred = model(iq, scalars).argmax(dim=1)
            hits += int((pred == target).sum())
            total += target.numel()
    return hits / max(total, 1)


def train(config: TrainConfig, data_path) -> tuple[Bundle, TrainReport]:
    torch.manual_seed(config.seed)
    reader = IfrReader(data_path)
    grid = reader.info.iq_shape[:2]
    targets = record_targets(reader, config.n_classes)
    if targets.max() >= config.n_classes:
        raise ValueError(
            f"dataset has target {targets.max()} outside "
            f"{config.n_classes} classes")

    train_idx, val_idx = stratified_split(targets, config.val_fraction,
                                          config.seed)
    norm_mean, norm_std = scalar_stats(reader, train_idx)

    model = InterferenceNet(config.alpha, config.beta, config.n_classes,
                            grid, dropout=config.dropout)
    if config.tl_base:
        base = load_bundle_file(config.tl_base)
        if (base.alpha, base.beta, base.n_classes) != \
                (config.alpha, config.beta, config.n_classes) \
                or tuple(base.grid) != tuple(grid):
            raise ValueError("tl_base bundle does not match the model")
        model.load_bundle(base)
        if config.freeze_block1:
            model.freeze_block1()

    weights = np.asarray(config.class_weights, dtype=np.float32) \
        if config.class_weights is not None \
        else inverse_frequency_weights(targets[train_idx], config.n_classes)
    loss_fn = nn.CrossEntropyLoss(weight=torch.from_numpy(weights))
    params = [p for p in model.parameters() if p.requires_grad]
    optimizer = torch.optim.Adam(params, lr=config.lr,
                                 weight_decay=config.l2)

    generator = torch.Generator().manual_seed(config.seed)
    train_loader = DataLoader(
        SlotDataset(reader, train_idx, targets[train_idx], norm_mean,
                    norm_std),
        batch_size=config.gamma, shuffle=True, generator=generator)
    val_loader = DataLoader(
        SlotDataset(reader, val_idx, targets[val_idx], norm_mean, norm_std),
        batch_size=config.gamma)

    best_acc = -1.0
    best_state = None
    history = []
    for _ in range(config.epochs):
        model.train()
        for iq, scalars, target in train_loader:
            optimizer.zero_grad()
            loss = loss_fn(model(iq, scalars), target)
            loss.backward()
            optimizer.step()
        acc = _accuracy(model, val_loader)
        history.append(acc)
        if acc > best_acc:
            best_acc = acc
            best_state = {k: v.detach().clone()
                          for k, v in model.state_dict().items()}
    model.load_state_dict(best_state)

    bundle = export_bundle(model, norm_mean, norm_std, config)
    report = TrainReport(val_accuracy=best_acc, epoch_val_accuracy=history,
                         train_records=len(train_idx),
                         val_records=len(val_idx),
                         class_counts=tuple(
                             np.bincount(targets,
                                         minlength=config.n_classes)))
    reader.close()
    return bundle, report


def export_bundle(model: InterferenceNet, norm_mean, norm_std,
                  config: TrainConfig) -> Bundle:
    meta = {
        "gamma": config.gamma,
        "lr": config.lr,
        "epochs": config.epochs,
        "dropout": list(config.dropout),
        "l2": config.l2,
        "seed": config.seed,
        "freeze_block1": config.freeze_block1,
    }
    if tuple(model.grid) == PRODUCTION_GRID and \
            (model.alpha, model.beta) not in PRODUCTION_FILTERS:
        meta["experimental"] = True
    return Bundle(alpha=model.alpha, beta=model.beta,
                  n_classes=model.n_classes, grid=tuple(model.grid),
                  norm_mean=norm_mean, norm_std=norm_std,
                  tensors=model.export_tensors(), meta=meta)


def bundle_logits(bundle: Bundle, records) -> np.ndarray:
    """Eval-mode logits for parity checks against the runtime engine."""
    model = InterferenceNet(bundle.alpha, bundle.beta, bundle.n_classes,
                            bundle.grid)
    model.load_bundle(bundle)
    model.eval()
    out = []
    with torch.no_grad():
        for record in records:
            iq = np.moveaxis(record.iq.astype(np.float32), -1, 0)[None]
            scalars = ((record.scalars - bundle.norm_mean)
                       / bundle.norm_std)[None]
            logits = model(torch.from_numpy(np.ascontiguousarray(iq)),
                           torch.from_numpy(scalars))
            out.append(logits.numpy()[0])
    return np.asarray(out)
