"""
Backpropagation, XOR and early stopping
=======================================

The network is a plain sigmoid MLP trained online. Its gradients are
checked against finite differences, it learns XOR, and on a noisy
validation split training stops once validation error keeps rising.
"""
import math

import numpy as np

from facekit import mlp

# analytic gradients against central differences
rng = mlp.SplitMix64(1)
for sizes in ([2, 3, 1], [4, 5, 3], [6, 8, 8, 2]):
    net = mlp.init_network(sizes, rng=rng)
    x = np.array([2 * rng.uniform() - 1 for _ in range(sizes[0])])
    t = np.array([rng.uniform() for _ in range(sizes[-1])])
    print(f"layers {sizes}: max relative error {mlp.gradient_check(net, x, t):.2e}")

# XOR needs the hidden layer
x = np.array([[0.0, 0.0], [0.0, 1.0], [1.0, 0.0], [1.0, 1.0]])
y = np.array([[0.0], [1.0], [1.0], [0.0]])
cfg = mlp.TrainConfig(hidden_sizes=(4,), learning_rate=0.5, max_epochs=10000, patience=math.inf,
                      restarts=1, split=(1.0, 0.0, 0.0), seed=0, goal=0.005)
net, rep = mlp.train(x, y, cfg)
print(f"XOR: {len(rep.epochs)} epochs, train MSE {rep.final_mse['train']:.4f}")
print("  outputs", np.round(net.predict(x).ravel(), 3))

# early stopping: two overlapping clouds, a fifth of the validation labels flipped
gen = np.random.default_rng(9)
n = 300
x = np.vstack([gen.normal(-1, 1.2, (n // 2, 4)), gen.normal(1, 1.2, (n // 2, 4))])
y = np.zeros((n, 2))
y[: n // 2, 0] = 1
y[n // 2:, 1] = 1
cfg = mlp.TrainConfig(hidden_sizes=(6,), learning_rate=0.05, max_epochs=5000, patience=6, restarts=3, seed=3)
split = mlp.split_dataset(n, cfg.split, cfg.seed)
flip = np.array(split.val)[gen.random(len(split.val)) < 0.2]
y[flip] = 1 - y[flip]
net, rep = mlp.train(x, y, cfg)
print(f"restart scores {[round(s, 4) for s in rep.restart_scores]}, chose {rep.restart}")
print(f"stopped by {rep.stop_reason} after {len(rep.epochs)} epochs; best epoch {rep.best_epoch}")
print(" epoch  train     val       test")
for e, tr, va, te in rep.epochs[-(cfg.patience + 2):]:
    mark = "  <- restored" if e == rep.best_epoch else ""
    print(f"{e:6d}  {tr:.5f}  {va:.5f}  {te:.5f}{mark}")
print("val MSE of the returned network", rep.final_mse["val"])
