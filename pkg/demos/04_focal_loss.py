"""How the focal term reweights easy and hard examples.

Run: python3 demos/04_focal_loss.py
"""
import numpy as np
import torch

from reclab.losses import CombinedParams, FocalParams, combined_loss, focal_loss

ps = [0.05, 0.25, 0.5, 0.75, 0.95]
print("p_t   " + "".join(f"gamma={g:<5}" for g in (0, 1, 2, 3)))
for p in ps:
    row = [float(focal_loss([[p, 1 - p]], [0], FocalParams(1.0, g))) for g in (0, 1, 2, 3)]
    print(f"{p:<5} " + "".join(f"{v:<11.4f}" for v in row))

# relative to cross-entropy, gamma=3 keeps almost all of the loss on hard rows
for p in (0.05, 0.95):
    ratio = float(focal_loss([[p, 1 - p]], [0], FocalParams(1, 3))) / float(focal_loss([[p, 1 - p]], [0], FocalParams(1, 0)))
    print(f"p_t={p}: focal/CE = {ratio:.4f}")

# the two heads are mixed affinely
rng = np.random.default_rng(0)
city = torch.softmax(torch.from_numpy(rng.normal(size=(8, 30))), 1)
country = torch.softmax(torch.from_numpy(rng.normal(size=(8, 5))), 1)
tc, tk = torch.from_numpy(rng.integers(0, 30, 8)), torch.from_numpy(rng.integers(0, 5, 8))
for beta in (0.0, 0.5, 1.0):
    print(f"beta={beta}: {float(combined_loss(city, country, tc, tk, CombinedParams(beta=beta))):.4f}")
