"""Offline trainer for the uplink interference classifier family."""

from .ifr import IfrReader, Record, write_ifr
from .ifw import Bundle, load, save
from .net import InterferenceNet
from .train import TrainConfig, TrainReport, bundle_logits, train

__version__ = "0.1.0"
