"""Small dense networks with explicit forward and backward passes.

Rectifier hidden layers, linear or tanh output. Gradients are written out by
hand and validated against central finite differences in the tests; the
optimizer is the usual adaptive moment scheme. Nothing here knows about
losses, callers push the upstream gradient in.
"""

import struct

import numpy as np

from .errors import DataError, NumericError, ParamError

_MAGIC = b"TNW1"
_FORMAT_VERSION = 1


class Mlp:
    """Fully connected layers of fixed sizes.

    sizes = [in, hidden..., out]. Weights use seeded uniform fan-in
    initialization, U(-1/sqrt(fan), 1/sqrt(fan)).
    """

    def __init__(self, sizes, out_act="linear", seed=0):
        if len(sizes) < 2:
            raise ParamError("need at least input and output sizes")
        if out_act not in ("linear", "tanh"):
            raise ParamError(f"unknown output activation {out_act!r}")
        self.sizes = [int(s) for s in sizes]
        self.out_act = out_act
        rng = np.random.default_rng(seed)
        self.weights = []
        self.biases = []
        for fan_in, fan_out in zip(self.sizes[:-1], self.sizes[1:]):
            bound = 1.0 / np.sqrt(fan_in)
            self.weights.append(rng.uniform(-bound, bound, size=(fan_in, fan_out)))
            self.biases.append(rng.uniform(-bound, bound, size=fan_out))

    def params(self):
        """Live references, interleaved (W0, b0, W1, b1, ...)."""
        out = []
        for w, b in zip(self.weights, self.biases):
            out.append(w)
            out.append(b)
        return out

    @property
    def n_params(self):
        return sum(p.size for p in self.params())

    def forward(self, x):
        """Returns (output, cache); pure, touches no state."""
        x = np.asarray(x, dtype=float)
        squeeze = x.ndim == 1
        if squeeze:
            x = x[None, :]
        if x.ndim != 2 or x.shape[1] != self.sizes[0]:
            raise ParamError(
                f"input shape {x.shape} does not feed a {self.sizes[0]}-wide layer"
            )
        acts = [x]
        h = x
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            z = h @ w + b
            last = i == len(self.weights) - 1
            if last:
                h = np.tanh(z) if self.out_act == "tanh" else z
            else:
                h = np.maximum(z, 0.0)
            acts.append(h)
        cache = {"acts": acts, "squeeze": squeeze}
        return (h[0] if squeeze else h), cache

    def backward(self, cache, gy):
        """Gradients of sum(output * gy) for every parameter plus the input.

        Returns (grads, gx) with grads aligned to params().
        """
        acts = cache["acts"]
        gy = np.asarray(gy, dtype=float)
        if cache["squeeze"]:
            gy = gy[None, :]
        if gy.shape != acts[-1].shape:
            raise ParamError("upstream gradient shape mismatch")
        g = gy
        if self.out_act == "tanh":
            g = g * (1.0 - acts[-1] ** 2)
        grads = [None] * (2 * len(self.weights))
        for i in range(len(self.weights) - 1, -1, -1):
            h_in = acts[i]
            grads[2 * i] = h_in.T @ g
            grads[2 * i + 1] = g.sum(axis=0)
            g = g @ self.weights[i].T
            if i > 0:
                g = g * (acts[i] > 0.0)
        gx = g[0] if cache["squeeze"] else g
        return grads, gx

    def copy(self):
        twin = Mlp(self.sizes, self.out_act, seed=0)
        for dst, src in zip(twin.params(), self.params()):
            dst[...] = src
        return twin


# ---------------------------------------------------------------------------
# optimization


def adam_init(net):
    return {
        "step": 0,
        "m": [np.zeros_like(p) for p in net.params()],
        "v": [np.zeros_like(p) for p in net.params()],
    }


def opt_step(net, grads, state, lr=1e-3, beta1=0.9, beta2=0.999, eps=1e-8):
    """One adaptive moment update, in place. Deterministic given state."""
    params = net.params()
    if len(grads) != len(params):
        raise ParamError("gradient list length mismatch")
    state["step"] += 1
    t = state["step"]
    c1 = 1.0 - beta1 ** t
    c2 = 1.0 - beta2 ** t
    for p, g, m, v in zip(params, grads, state["m"], state["v"]):
        if g.shape != p.shape:
            raise ParamError("gradient shape mismatch")
        m *= beta1
        m += (1.0 - beta1) * g
        v *= beta2
        v += (1.0 - beta2) * g * g
        p -= lr * (m / c1) / (np.sqrt(v / c2) + eps)
        if not np.all(np.isfinite(p)):
            raise NumericError("non-finite parameters after optimizer step")
    return net


def soft_update(target, source, tau):
    """target <- tau * source + (1 - tau) * target, elementwise."""
    if target.sizes != source.sizes or target.out_act != source.out_act:
        raise ParamError("architecture mismatch in soft update")
    for tp, sp in zip(target.params(), source.params()):
        tp *= 1.0 - tau
        tp += tau * sp
    return target


def clip_global_norm(grads, max_norm=10.0):
    """Scales the gradient list in place; returns the pre-clip global norm."""
    total = float(np.sqrt(sum(float(np.sum(g * g)) for g in grads)))
    if total > max_norm and total > 0.0:
        scale = max_norm / total
        for g in grads:
            g *= scale
    return total


# ---------------------------------------------------------------------------
# persistence


def save_net(net, path):
    """Architecture header plus flat little-endian float64 parameters."""
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(struct.pack("<I", _FORMAT_VERSION))
        fh.write(struct.pack("<B", 1 if net.out_act == "tanh" else 0))
        fh.write(struct.pack("<I", len(net.sizes)))
        fh.write(struct.pack(f"<{len(net.sizes)}I", *net.sizes))
        for p in net.params():
            fh.write(p.astype("<f8").tobytes())


def load_net(path):
    with open(path, "rb") as fh:
        raw = fh.read()
    if raw[:4] != _MAGIC:
        raise DataError("not a network snapshot")
    off = 4
    (version,) = struct.unpack_from("<I", raw, off)
    off += 4
    if version != _FORMAT_VERSION:
        raise DataError(f"unsupported snapshot version {version}")
    (out_flag,) = struct.unpack_from("<B", raw, off)
    off += 1
    (n_sizes,) = struct.unpack_from("<I", raw, off)
    off += 4
    sizes = list(struct.unpack_from(f"<{n_sizes}I", raw, off))
    off += 4 * n_sizes
    net = Mlp(sizes, "tanh" if out_flag else "linear", seed=0)
    for p in net.params():
        end = off + 8 * p.size
        if end > len(raw):
            raise DataError("snapshot truncated")
        p[...] = np.frombuffer(raw[off:end], dtype="<f8").reshape(p.shape)
        off = end
    if off != len(raw):
        raise DataError("snapshot has trailing bytes")
    return net


# ---------------------------------------------------------------------------
# verification


def kink_distance(net, x):
    """Smallest |pre-activation| over the rectifier layers at x."""
    x = np.atleast_2d(np.asarray(x, dtype=float))
    h = x
    closest = np.inf
    for i, (w, b) in enumerate(zip(net.weights, net.biases)):
        z = h @ w + b
        if i < len(net.weights) - 1:
            closest = min(closest, float(np.min(np.abs(z))))
            h = np.maximum(z, 0.0)
    return closest


def gradient_check(net, x, h=1e-5, rng=None):
    """Max relative error of analytic vs central-difference gradients.

    Projects the output through a fixed random functional so a scalar loss
    exists, then perturbs every parameter coordinate and the input. Points
    within the stencil width of a rectifier kink make the central difference
    itself invalid, so the probe is nudged to a generic position first.
    """
    rng = np.random.default_rng(0) if rng is None else rng
    x = np.array(x, dtype=float)  # owned and contiguous so ravel views write through
    for _ in range(50):
        if kink_distance(net, x) > 50.0 * h:
            break
        x = x + rng.normal(scale=1e-3, size=x.shape)
    y, cache = net.forward(x)
    proj = rng.normal(size=np.shape(y))

    def loss():
        out, _ = net.forward(x)
        return float(np.sum(out * proj))

    grads, gx = net.backward(cache, proj)
    worst = 0.0
    for p, g in zip(net.params(), grads):
        flat_p = p.ravel()
        flat_g = g.ravel()
        for i in range(flat_p.size):
            keep = flat_p[i]
            flat_p[i] = keep + h
            up = loss()
            flat_p[i] = keep - h
            dn = loss()
            flat_p[i] = keep
            num = (up - dn) / (2.0 * h)
            denom = max(abs(num) + abs(flat_g[i]), 1e-8)
            worst = max(worst, abs(num - flat_g[i]) / denom)
    # input gradient by the same probe
    xf = x.ravel()
    gxf = np.asarray(gx).ravel()
    for i in range(xf.size):
        keep = xf[i]
        xf[i] = keep + h
        up = loss()
        xf[i] = keep - h
        dn = loss()
        xf[i] = keep
        num = (up - dn) / (2.0 * h)
        denom = max(abs(num) + abs(gxf[i]), 1e-8)
        worst = max(worst, abs(num - gxf[i]) / denom)
    return worst
