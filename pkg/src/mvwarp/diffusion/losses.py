"""Diffusion objectives. Work on numpy arrays and torch tensors alike."""
from __future__ import annotations


def _shape(x):
    return tuple(x.shape)


def diffusion_loss(eps, eps_hat):
    if _shape(eps) != _shape(eps_hat):
        raise ValueError(f"shape mismatch {_shape(eps)} vs {_shape(eps_hat)}")
    d = eps - eps_hat
    return (d * d).mean()


def masked_diffusion_loss(eps, eps_hat, latent_mask):
    """Squared error averaged over visible elements only.

    ``latent_mask`` either matches ``eps`` exactly or lacks its trailing
    channel axis. Returns 0 when nothing is visible.
    """
    if _shape(eps) != _shape(eps_hat):
        raise ValueError(f"shape mismatch {_shape(eps)} vs {_shape(eps_hat)}")
    m = latent_mask
    if _shape(m) == _shape(eps)[:-1]:
        m = m[..., None]
    elif _shape(m) != _shape(eps):
        raise ValueError(f"mask shape {_shape(latent_mask)} does not fit {_shape(eps)}")
    d = eps - eps_hat
    num = (d * d * m).sum()
    count = m.sum() * (eps.shape[-1] if _shape(latent_mask) != _shape(eps) else 1)
    if float(count) == 0:
        return num * 0.0
    return num / count
