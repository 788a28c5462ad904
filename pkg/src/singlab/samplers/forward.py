"""Forward noising: the closed-form transition and the discrete chain."""

import numpy as np

from singlab.mixture import MixtureModel


def forward_sample(model: MixtureModel, x_s, s: float, t: float, rng: np.random.Generator) -> np.ndarray:
    """x_t = alpha_t|s x_s + sigma_t|s z for 0 <= s < t <= 1."""
    tr = model.schedule.transition(s, t)
    x_s = np.asarray(x_s, dtype=float)
    return tr.alpha_t_given_s * x_s + tr.sigma_t_given_s * rng.standard_normal(x_s.shape)


def forward_chain(model: MixtureModel, x0, T: int, rng: np.random.Generator) -> np.ndarray:
    """
    Run the discrete chain x_i = sqrt(1 - beta_i) x_{i-1} + sqrt(beta_i) z_i.

    Returns:
        array of shape (T + 1,) + x0.shape holding x_0 .. x_T
    """
    betas = model.schedule.beta_hat_table(T)
    x = np.asarray(x0, dtype=float)
    states = np.empty((T + 1,) + x.shape)
    states[0] = x
    for i, beta in enumerate(betas, 1):
        x = np.sqrt(1.0 - beta) * x + np.sqrt(beta) * rng.standard_normal(x.shape)
        states[i] = x
    return states
