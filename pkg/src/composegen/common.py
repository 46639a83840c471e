"""Shared training plumbing: schedules, checksums, state-dict conversion."""

from dataclasses import dataclass

import numpy as np
import torch


@dataclass(frozen=True)
class TrainSchedule:
    lr: float
    steps: int
    batch_size: int
    seed: int = 0


def weight_checksum(module: torch.nn.Module) -> float:
    """Cheap frozen-module fingerprint: sum of all parameters."""
    return float(sum(p.detach().double().sum() for p in module.parameters()))


def state_to_arrays(module: torch.nn.Module) -> dict:
    return {k: v.detach().cpu().numpy() for k, v in module.state_dict().items()}


def arrays_to_state(module: torch.nn.Module, arrays: dict):
    dtype = next(module.parameters()).dtype
    state = {k: torch.from_numpy(np.asarray(v)).to(dtype) for k, v in arrays.items()}
    module.load_state_dict(state)


class NaNLossError(RuntimeError):
    def __init__(self, step: int, lr: float):
        super().__init__(f"loss became non-finite at step {step} (lr={lr})")
        self.step = step
        self.lr = lr
