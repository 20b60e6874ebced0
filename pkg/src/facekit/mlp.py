"""Feed-forward sigmoid network trained by online backpropagation with early stopping."""
from __future__ import annotations

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

log = logging.getLogger(__name__)

_MASK64 = (1 << 64) - 1


class SplitMix64:
    """splitmix64 stream; the only randomness used by network training."""

    def __init__(self, seed: int):
        self.state = seed & _MASK64

    def next_u64(self) -> int:
        self.state = (self.state + 0x9E3779B97F4A7C15) & _MASK64
        z = self.state
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
        return z ^ (z >> 31)

    def uniform(self) -> float:
        """Double in [0, 1) from the top 53 bits."""
        return (self.next_u64() >> 11) * (1.0 / 9007199254740992.0)

    def below(self, n: int) -> int:
        return min(int(self.uniform() * n), n - 1)

    def shuffle(self, items: list) -> None:
        """In-place Fisher-Yates."""
        for i in range(len(items) - 1, 0, -1):
            j = self.below(i + 1)
            items[i], items[j] = items[j], items[i]


def sigmoid(z):
    return 1.0 / (1.0 + np.exp(-z))


@dataclass
class Network:
    layer_sizes: list[int]
    weights: list[np.ndarray]  # (out, in) per layer
    biases: list[np.ndarray]
    output_activation: str = "sigmoid"
    # optional per-input affine map (x - center) * gain applied before layer 1
    input_center: np.ndarray | None = None
    input_gain: np.ndarray | None = None

    def __post_init__(self):
        if len(self.layer_sizes) < 2:
            raise ValueError("a network needs at least input and output layers")
        if len(self.weights) != len(self.layer_sizes) - 1 or len(self.biases) != len(self.weights):
            raise ValueError("one weight matrix and bias vector per layer transition")
        for k, (w, b) in enumerate(zip(self.weights, self.biases)):
            shape = (self.layer_sizes[k + 1], self.layer_sizes[k])
            if w.shape != shape or b.shape != (shape[0],):
                raise ValueError(f"layer {k}: expected weights {shape} and bias ({shape[0]},)")
        if self.output_activation not in ("sigmoid", "linear"):
            raise ValueError("output_activation must be 'sigmoid' or 'linear'")
        if (self.input_center is None) != (self.input_gain is None):
            raise ValueError("input_center and input_gain go together")
        if self.input_center is not None:
            n = self.layer_sizes[0]
            if self.input_center.shape != (n,) or self.input_gain.shape != (n,):
                raise ValueError(f"input scaling must have shape ({n},)")

    @property
    def n_inputs(self) -> int:
        return self.layer_sizes[0]

    @property
    def n_outputs(self) -> int:
        return self.layer_sizes[-1]

    def copy(self) -> "Network":
        return Network(list(self.layer_sizes), [w.copy() for w in self.weights],
                       [b.copy() for b in self.biases], self.output_activation,
                       self.input_center, self.input_gain)

    def scale_inputs(self, x: np.ndarray) -> np.ndarray:
        if self.input_center is None:
            return x
        return (x - self.input_center) * self.input_gain

    def predict(self, x) -> np.ndarray:
        """Output activations for one sample or a (n, inputs) batch."""
        x = np.asarray(x, dtype=np.float64)
        if x.ndim == 1:
            return forward(self, x)[-1]
        return _forward_batch(self, x)


def init_network(layer_sizes, seed: int = 42, output_activation: str = "sigmoid",
                 rng: SplitMix64 | None = None) -> Network:
    """Uniform weights and biases in +-1/sqrt(fan_in).

    Draw order is layer-major, row-major, a layer's weights before its biases.
    """
    sizes = [int(s) for s in layer_sizes]
    if len(sizes) < 2 or min(sizes) < 1:
        raise ValueError("need >= 2 layers, each of size >= 1")
    rng = rng or SplitMix64(seed)
    weights, biases = [], []
    for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
        lim = 1.0 / math.sqrt(fan_in)
        w = np.array([(2.0 * rng.uniform() - 1.0) * lim for _ in range(fan_in * fan_out)])
        b = np.array([(2.0 * rng.uniform() - 1.0) * lim for _ in range(fan_out)])
        weights.append(w.reshape(fan_out, fan_in))
        biases.append(b)
    return Network(sizes, weights, biases, output_activation)


def forward(net: Network, x) -> list[np.ndarray]:
    """Activations of every layer, input included."""
    a = np.asarray(x, dtype=np.float64)
    if a.shape != (net.n_inputs,):
        raise ValueError(f"input has shape {a.shape}, network expects ({net.n_inputs},)")
    a = net.scale_inputs(a)
    acts = [a]
    last = len(net.weights) - 1
    for k, (w, b) in enumerate(zip(net.weights, net.biases)):
        z = w @ a + b
        a = z if (k == last and net.output_activation == "linear") else sigmoid(z)
        acts.append(a)
    return acts


def _forward_batch(net: Network, x: np.ndarray) -> np.ndarray:
    if x.ndim != 2 or x.shape[1] != net.n_inputs:
        raise ValueError(f"batch has shape {x.shape}, network expects (n, {net.n_inputs})")
    a = net.scale_inputs(x)
    last = len(net.weights) - 1
    for k, (w, b) in enumerate(zip(net.weights, net.biases)):
        z = a @ w.T + b
        a = z if (k == last and net.output_activation == "linear") else sigmoid(z)
    return a


def mse(outputs, targets) -> float:
    o = np.asarray(outputs, dtype=np.float64)
    t = np.asarray(targets, dtype=np.float64)
    if o.shape != t.shape:
        raise ValueError(f"shape mismatch {o.shape} vs {t.shape}")
    if o.size == 0:
        raise ValueError("mse of an empty set")
    return float(np.mean((o - t) ** 2))


def sample_loss(net: Network, x, target) -> float:
    """Half the summed squared error of one sample; ``backward`` returns its exact gradient."""
    out = forward(net, x)[-1]
    return 0.5 * float(np.sum((out - np.asarray(target, dtype=np.float64)) ** 2))


def backward(net: Network, activations, target):
    """Per-layer (weight, bias) gradients of ``sample_loss`` given ``forward`` activations."""
    if len(activations) != len(net.layer_sizes) or any(
            a.shape != (n,) for a, n in zip(activations, net.layer_sizes)):
        raise ValueError("activations do not match the network's layer sizes")
    t = np.asarray(target, dtype=np.float64)
    out = activations[-1]
    if t.shape != out.shape:
        raise ValueError(f"target has shape {t.shape}, expected {out.shape}")
    delta = out - t
    if net.output_activation == "sigmoid":
        delta = delta * out * (1.0 - out)
    n = len(net.weights)
    gw = [None] * n
    gb = [None] * n
    for k in range(n - 1, -1, -1):
        prev = activations[k]
        gw[k] = delta[:, None] * prev
        gb[k] = delta
        if k:
            delta = (net.weights[k].T @ delta) * prev * (1.0 - prev)
    return gw, gb


def sgd_step(net: Network, grads, learning_rate: float) -> Network:
    """In-place ``w -= learning_rate * grad``; returns ``net``."""
    gw, gb = grads
    for k in range(len(net.weights)):
        if gw[k].shape != net.weights[k].shape or gb[k].shape != net.biases[k].shape:
            raise ValueError(f"gradient shapes do not match layer {k}")
        net.weights[k] -= learning_rate * gw[k]
        net.biases[k] -= learning_rate * gb[k]
    return net


def _loss_extended(weights, biases, output_activation, x, target) -> np.longdouble:
    a = np.asarray(x, dtype=np.longdouble)
    last = len(weights) - 1
    for k, (w, b) in enumerate(zip(weights, biases)):
        z = w @ a + b
        a = z if (k == last and output_activation == "linear") else 1 / (1 + np.exp(-z))
    d = a - np.asarray(target, dtype=np.longdouble)
    return np.longdouble(0.5) * np.sum(d * d)


def gradient_check(net: Network, x, target, epsilon: float = 1e-5) -> float:
    """Max relative error between ``backward`` and central finite differences.

    The finite differences are evaluated in extended precision so that
    cancellation in L(w+eps) - L(w-eps) does not swamp small gradient
    components; ``backward`` itself runs in float64.
    """
    if epsilon <= 0:
        raise ValueError("epsilon must be positive")
    gw, gb = backward(net, forward(net, x), target)
    weights = [w.astype(np.longdouble) for w in net.weights]
    biases = [b.astype(np.longdouble) for b in net.biases]
    eps = np.longdouble(epsilon)
    worst = 0.0
    for params, grads in ((weights, gw), (biases, gb)):
        for p, g in zip(params, grads):
            flat, gflat = p.reshape(-1), g.reshape(-1)
            for i in range(flat.size):
                keep = flat[i]
                flat[i] = keep + eps
                up = _loss_extended(weights, biases, net.output_activation, x, target)
                flat[i] = keep - eps
                down = _loss_extended(weights, biases, net.output_activation, x, target)
                flat[i] = keep
                num = float((up - down) / (2 * eps))
                ana = float(gflat[i])
                rel = abs(ana - num) / max(abs(ana), abs(num), 1e-12)
                worst = max(worst, rel)
    return worst


def _online_step(net: Network, x: np.ndarray, t: np.ndarray, lr: float) -> None:
    # forward + backward + sgd_step fused, same arithmetic as the separate calls
    acts = [x]
    a = x
    last = len(net.weights) - 1
    for k, (w, b) in enumerate(zip(net.weights, net.biases)):
        z = w @ a + b
        a = z if (k == last and net.output_activation == "linear") else 1.0 / (1.0 + np.exp(-z))
        acts.append(a)
    delta = a - t
    if net.output_activation == "sigmoid":
        delta = delta * a * (1.0 - a)
    for k in range(last, -1, -1):
        prev = acts[k]
        w = net.weights[k]
        nxt = (w.T @ delta) * prev * (1.0 - prev) if k else None
        w -= lr * (delta[:, None] * prev)
        net.biases[k] -= lr * delta
        delta = nxt


# ---------------------------------------------------------------------------
# data split and training


@dataclass
class DataSplit:
    train: list[int]
    val: list[int]
    test: list[int]


def _round_half_up(v: float) -> int:
    return int(math.floor(v + 0.5))


def split_dataset(n: int, fractions=(0.70, 0.15, 0.15), seed: int = 42) -> DataSplit:
    """Seeded shuffle, then val and test get round(n * fraction); train takes the rest."""
    if n < 3:
        raise ValueError("need at least 3 samples to split")
    f_train, f_val, f_test = fractions
    if abs(f_train + f_val + f_test - 1.0) > 1e-9 or min(fractions) < 0:
        raise ValueError("split fractions must be non-negative and sum to 1")
    n_val = _round_half_up(n * f_val)
    n_test = _round_half_up(n * f_test)
    n_train = n - n_val - n_test
    for name, size, frac in (("train", n_train, f_train), ("val", n_val, f_val), ("test", n_test, f_test)):
        if frac > 0 and size <= 0:
            raise ValueError(f"{n} samples leave the {name} partition empty")
    perm = list(range(n))
    SplitMix64(seed).shuffle(perm)
    return DataSplit(perm[:n_train], perm[n_train:n_train + n_val], perm[n_train + n_val:])


@dataclass
class TrainConfig:
    learning_rate: float = 0.1
    max_epochs: int = 1000
    patience: float = 6  # math.inf disables early stopping
    split: tuple = (0.70, 0.15, 0.15)
    restarts: int = 5
    hidden_sizes: tuple = (16,)
    seed: int = 42
    shuffle_each_epoch: bool = True
    batch: bool = False
    output_activation: str = "sigmoid"
    goal: float = 0.0  # stop once training MSE <= goal
    input_scaling: str = "minmax"  # or "none"

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be > 0")
        if abs(sum(self.split) - 1.0) > 1e-9:
            raise ValueError("split fractions must sum to 1")
        if self.restarts < 1:
            raise ValueError("restarts must be >= 1")
        if self.max_epochs < 1:
            raise ValueError("max_epochs must be >= 1")
        if self.input_scaling not in ("minmax", "none"):
            raise ValueError("input_scaling must be 'minmax' or 'none'")

    def to_dict(self) -> dict:
        d = {k: getattr(self, k) for k in self.__dataclass_fields__}
        d["split"] = list(self.split)
        d["hidden_sizes"] = list(self.hidden_sizes)
        if math.isinf(d["patience"]):
            d["patience"] = None
        return d


@dataclass
class RegressionStat:
    r: float
    n: int
    degenerate: bool = False


@dataclass
class TrainReport:
    epochs: list[tuple[int, float, float, float]] = field(default_factory=list)
    best_epoch: int = 0
    final_mse: dict = field(default_factory=dict)
    regression: dict = field(default_factory=dict)
    restart: int = 0
    restart_scores: list[float] = field(default_factory=list)
    split: DataSplit | None = None
    stop_reason: str = ""
    skipped: list = field(default_factory=list)

    def curves_csv(self) -> str:
        lines = ["epoch,train_mse,val_mse,test_mse"]
        for e, tr, va, te in self.epochs:
            lines.append(f"{e},{tr!r},{va!r},{te!r}")
        return "\n".join(lines) + "\n"

    def regression_csv(self) -> str:
        lines = ["split,R,n"]
        for name in ("train", "val", "test"):
            if name in self.regression:
                st = self.regression[name]
                lines.append(f"{name},{st.r!r},{st.n}")
        return "\n".join(lines) + "\n"


def regression_stat(outputs, targets) -> RegressionStat:
    """Pearson R between flattened outputs and targets; 0 and flagged when either is constant."""
    o = np.asarray(outputs, dtype=np.float64).ravel()
    t = np.asarray(targets, dtype=np.float64).ravel()
    if o.shape != t.shape:
        raise ValueError("outputs and targets differ in size")
    if o.size == 0:
        raise ValueError("regression of an empty split")
    n = np.asarray(outputs).shape[0] if np.ndim(outputs) > 1 else o.size
    do, dt = o - o.mean(), t - t.mean()
    so, st = math.sqrt(float(do @ do)), math.sqrt(float(dt @ dt))
    if so == 0.0 or st == 0.0:
        return RegressionStat(0.0, n, True)
    return RegressionStat(float(do @ dt) / (so * st), n, False)


def minmax_scaling(x: np.ndarray):
    """Per-column centre and gain mapping [min, max] onto [-1, 1]; constant columns map to 0."""
    lo, hi = x.min(axis=0), x.max(axis=0)
    span = hi - lo
    gain = np.zeros_like(span)
    np.divide(2.0, span, out=gain, where=span > 0)
    return (lo + hi) / 2.0, gain


def _split_mse(net, x, y, idx):
    if not idx:
        return float("nan")
    return mse(_forward_batch(net, x[idx]), y[idx])


def _train_once(x, y, split: DataSplit, cfg: TrainConfig, restart: int):
    seed = cfg.seed + restart
    rng = SplitMix64(seed)
    sizes = [x.shape[1], *cfg.hidden_sizes, y.shape[1]]
    net = init_network(sizes, rng=rng, output_activation=cfg.output_activation)
    order = list(split.train)
    monitor = "val" if split.val else "train"

    curves = []
    best = (math.inf, 0, net.copy())
    stop = "max_epochs"
    for epoch in range(1, cfg.max_epochs + 1):
        if cfg.shuffle_each_epoch:
            rng.shuffle(order)
        if cfg.batch:
            acc = None
            for i in order:
                gw, gb = backward(net, forward(net, x[i]), y[i])
                acc = (gw, gb) if acc is None else (
                    [a + g for a, g in zip(acc[0], gw)], [a + g for a, g in zip(acc[1], gb)])
            sgd_step(net, acc, cfg.learning_rate / len(order))
        else:
            lr = cfg.learning_rate
            for i in order:
                _online_step(net, x[i], y[i], lr)
        tr = _split_mse(net, x, y, split.train)
        va = _split_mse(net, x, y, split.val)
        te = _split_mse(net, x, y, split.test)
        curves.append((epoch, tr, va, te))
        watched = va if monitor == "val" else tr
        if watched < best[0]:
            best = (watched, epoch, net.copy())
        if tr <= cfg.goal:
            stop = "goal"
            break
        if epoch - best[1] >= cfg.patience:
            stop = "validation"
            break
    return best[2], best[0], best[1], curves, stop


def train(samples, targets, config: TrainConfig | None = None, threads: int = 1):
    """Fit a network with restarts, keeping the one with the lowest best validation MSE.

    Each restart r uses seed ``config.seed + r`` for both initialisation and
    per-epoch shuffling, so results do not depend on ``threads``. When the
    validation split is empty, training MSE is monitored instead.
    """
    cfg = config or TrainConfig()
    x = np.asarray(samples, dtype=np.float64)
    y = np.asarray(targets, dtype=np.float64)
    if x.ndim != 2 or y.ndim != 2 or len(x) != len(y):
        raise ValueError("samples and targets must be 2-d with one row per sample")
    split = split_dataset(len(x), cfg.split, cfg.seed)
    center = gain = None
    if cfg.input_scaling == "minmax":
        center, gain = minmax_scaling(x[split.train])
    # the scaling is fixed before training, so pre-scaling the data once gives
    # bit-identical activations to a network that scales its own inputs
    xs = x if center is None else (x - center) * gain

    def run(r):
        return _train_once(xs, y, split, cfg, r)

    if threads > 1 and cfg.restarts > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(run, range(cfg.restarts)))
    else:
        results = [run(r) for r in range(cfg.restarts)]

    scores = [res[1] for res in results]
    chosen = min(range(len(results)), key=lambda r: (scores[r], r))
    net, _, best_epoch, curves, stop = results[chosen]
    net.input_center, net.input_gain = center, gain
    report = TrainReport(epochs=curves, best_epoch=best_epoch, restart=chosen,
                         restart_scores=scores, split=split, stop_reason=stop)
    for name in ("train", "val", "test"):
        idx = getattr(split, name)
        if idx:
            out = _forward_batch(net, x[idx])
            report.final_mse[name] = mse(out, y[idx])
            if len(idx) >= 2:
                report.regression[name] = regression_stat(out, y[idx])
    log.info("restart %d chosen, best epoch %d, MSE %s", chosen, best_epoch, report.final_mse)
    return net, report
