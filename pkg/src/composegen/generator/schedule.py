"""Forward-process noise schedule."""

from dataclasses import dataclass, field

import numpy as np
import torch


@dataclass(frozen=True)
class DiffusionSchedule:
    betas: np.ndarray
    alphas: np.ndarray = field(init=False)
    alpha_bars: np.ndarray = field(init=False)

    def __post_init__(self):
        betas = np.asarray(self.betas, dtype=np.float64)
        if betas.ndim != 1 or len(betas) < 1:
            raise ValueError("betas must be a non-empty 1D array")
        if not (np.all(betas > 0) and np.all(betas < 1) and np.all(np.diff(betas) > 0)):
            raise ValueError("betas must satisfy 0 < beta_1 < ... < beta_T < 1")
        object.__setattr__(self, "betas", betas)
        object.__setattr__(self, "alphas", 1.0 - betas)
        object.__setattr__(self, "alpha_bars", np.cumprod(1.0 - betas))

    @property
    def num_timesteps(self) -> int:
        return len(self.betas)

    @classmethod
    def linear(cls, num_timesteps: int = 1000, beta_start: float = 1e-4,
               beta_end: float = 0.02) -> "DiffusionSchedule":
        return cls(np.linspace(beta_start, beta_end, num_timesteps))


def q_sample(x0: torch.Tensor, t, eps: torch.Tensor,
             schedule: DiffusionSchedule) -> torch.Tensor:
    """x_t = sqrt(abar_t) x0 + sqrt(1 - abar_t) eps; t is 1-based in [1, T].

    t may be an int or a per-sample tensor of ints.
    """
    t_arr = torch.as_tensor(t, dtype=torch.long)
    if torch.any(t_arr < 1) or torch.any(t_arr > schedule.num_timesteps):
        raise ValueError(f"t must lie in [1, {schedule.num_timesteps}]")
    abar = torch.from_numpy(schedule.alpha_bars).to(x0.dtype)[t_arr - 1]
    while abar.ndim < x0.ndim:
        abar = abar.unsqueeze(-1)
    return torch.sqrt(abar) * x0 + torch.sqrt(1.0 - abar) * eps
