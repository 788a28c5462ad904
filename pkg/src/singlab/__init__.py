"""singlab - closed-form laboratory for singular time steps in diffusion sampling."""

__version__ = "0.1.0"
