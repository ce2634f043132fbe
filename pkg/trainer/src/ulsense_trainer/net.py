"""Torch definition of the two-block IQ classifier family.

Layer names deliberately match the bundle tensor names so the state
dict exports without any renaming. Dropout sits after each pooling
stage and before the dense head; none of it survives into the exported
bundle, which only ever sees eval-mode semantics.
"""

from __future__ import annotations

import numpy as np
import torch
import torch.nn.functional as F
from torch import nn

from .ifw import Bundle, TENSOR_ORDER

BLOCK1 = ("conv1a", "conv1b")


class InterferenceNet(nn.Module):
    def __init__(self, alpha: int, beta: int, n_classes: int, grid,
                 n_scalars: int = 7, dropout=(0.25, 0.25, 0.5)):
        super().__init__()
        h, w = grid
        self.grid = (h, w)
        self.alpha, self.beta = alpha, beta
        self.n_classes = n_classes
        self.n_scalars = n_scalars
        self.conv1a = nn.Conv2d(2, alpha, 3, padding=1)
        self.conv1b = nn.Conv2d(alpha, alpha, 3, padding=1)
        self.conv2a = nn.Conv2d(alpha, beta, 3, padding=1)
        self.conv2b = nn.Conv2d(beta, beta, 3, padding=1)
        self.pool = nn.MaxPool2d(2)
        self.drop1 = nn.Dropout(dropout[0])
        self.drop2 = nn.Dropout(dropout[1])
        self.drop3 = nn.Dropout(dropout[2])
        flatten = beta * ((h // 2) // 2) * ((w // 2) // 2)
        self.dense = nn.Linear(flatten + n_scalars, n_classes)

    def forward(self, iq: torch.Tensor, scalars: torch.Tensor):
        x = F.relu(self.conv1a(iq))
        x = F.relu(self.conv1b(x))
        x = self.drop1(self.pool(x))
        x = F.relu(self.conv2a(x))
        x = F.relu(self.conv2b(x))
        x = self.drop2(self.pool(x))
        v = torch.cat([x.flatten(1), scalars], dim=1)
        return self.dense(self.drop3(v))

    def freeze_block1(self):
        for name in BLOCK1:
            for p in getattr(self, name).parameters():
                p.requires_grad_(False)

    def load_bundle(self, bundle: Bundle):
        state = {name: torch.from_numpy(np.array(tensor))
                 for name, tensor in bundle.tensors.items()}
        self.load_state_dict(state, strict=True)

    def export_tensors(self) -> dict:
        state = self.state_dict()
        return {name: state[name].detach().cpu().numpy().astype(
            np.float32, copy=True) for name in TENSOR_ORDER}
