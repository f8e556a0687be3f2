"""Small random models and batches shared by model, gradient and acceptance tests."""

import numpy as np
import torch

from reclab.model import Batch, ModelConfig, SessionModel


def small_config(**kw):
    base = dict(n_city_ids=20, n_country_ids=6, embedding_dim=8, month_dim=4, duration_dim=4, hidden_size=8,
                n_step_features=3, n_bypass_features=5, n_devices=3, n_bookers=3, category_dim=4,
                use_time=True, use_self_attention=True, multitask=True, dropout=0.0)
    base.update(kw)
    return ModelConfig(**base)


def random_batch(cfg, n, window=6, seed=0, lengths=None):
    g = np.random.default_rng(seed)
    lengths = lengths if lengths is not None else g.integers(1, window + 1, n)
    cities = np.zeros((n, window), dtype=np.int64)
    durations = np.zeros((n, window), dtype=np.int64)
    for i, L in enumerate(lengths):
        cities[i, :L] = g.integers(1, cfg.n_city_ids, L)
        durations[i, :L] = g.integers(0, 30, L)
    steps = g.normal(size=(n, window, cfg.n_step_features)) * (cities > 0)[..., None]
    return Batch(
        cities=torch.from_numpy(cities),
        durations=torch.from_numpy(durations),
        months=torch.from_numpy(g.integers(1, 13, n)),
        step_features=torch.from_numpy(steps).float() if cfg.n_step_features else None,
        bypass=torch.from_numpy(g.normal(size=(n, cfg.n_bypass_features))).float() if cfg.n_bypass_features else None,
        devices=torch.from_numpy(g.integers(0, max(cfg.n_devices, 1), n)) if cfg.n_devices else None,
        bookers=torch.from_numpy(g.integers(0, max(cfg.n_bookers, 1), n)) if cfg.n_bookers else None,
        city_targets=torch.from_numpy(g.integers(2, cfg.n_city_ids, n)),
        country_targets=torch.from_numpy(g.integers(2, cfg.n_country_ids, n)),
    )


def make_model(seed=0, **kw):
    torch.manual_seed(seed)
    return SessionModel(small_config(**kw)).eval()


def pad_extend(batch, extra, junk=False, seed=0):
    """Append ``extra`` pad steps; with ``junk`` the padded region carries garbage features."""
    n = len(batch)
    g = torch.Generator().manual_seed(seed)
    z = torch.zeros(n, extra, dtype=torch.long)
    dur = torch.randint(0, 40, (n, extra), generator=g) if junk else z
    steps = None
    if batch.step_features is not None:
        pad = torch.randn(n, extra, batch.step_features.shape[2], generator=g) if junk else \
            torch.zeros(n, extra, batch.step_features.shape[2])
        steps = torch.cat([batch.step_features, pad], dim=1)
    return Batch(torch.cat([batch.cities, z], 1), torch.cat([batch.durations, dur], 1), batch.months, steps,
                 batch.bypass, batch.devices, batch.bookers, batch.city_targets, batch.country_targets)
