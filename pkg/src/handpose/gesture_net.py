"""The 10-class gesture classifier: network construction, dataset loading,
training, evaluation and bit-exact weight serialization.

Architecture: Conv(1->6,5x5) ReLU Pool Conv(6->16,3x3) ReLU Pool Flatten
Dense(1600->120) ReLU Dense(120->84) ReLU Dense(84->10), for 48x48 binary
inputs. 204,170 parameters total.
"""

from __future__ import annotations

import struct
import zlib
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import rand
from .errors import (
    BadMagic,
    ChecksumMismatch,
    EmptyClass,
    NonContiguousLabels,
    ShapeMismatch,
    TruncatedBody,
    VersionMismatch,
    WrongSize,
)
from .imaging import BinaryMask, load_pnm
from .tensor_nn import (
    Conv2D,
    Dense,
    Flatten,
    Hyper,
    MaxPool2x2,
    ReLU,
    sgd_step,
    softmax,
    softmax_xent_batch,
)

INPUT_SIDE = 48
NUM_CLASSES = 10
# shapes after each stage: 48 -> 44 -> 22 -> 20 -> 10 -> 1600 -> 120 -> 84 -> 10
SHAPE_CHAIN = ((6, 44, 44), (6, 22, 22), (16, 20, 20), (16, 10, 10), (1600,), (120,), (84,), (10,))
PARAM_COUNT = 204_170


class Network:
    """Ordered layer list with convenience forward/backward over it."""

    def __init__(self, layers):
        self.layers = list(layers)
        self._assert_shapes()

    def _assert_shapes(self):
        probe = np.zeros((1, 1, INPUT_SIDE, INPUT_SIDE), dtype=np.float32)
        expect = iter(SHAPE_CHAIN)
        for layer in self.layers:
            probe = layer.forward(probe)
            if isinstance(layer, (Conv2D, MaxPool2x2, Flatten, Dense)):
                want = next(expect)
                if probe.shape[1:] != want:
                    raise ShapeMismatch(f"stage produced {probe.shape[1:]}, expected {want}")

    def params(self):
        return [p for layer in self.layers for p in layer.params()]

    @property
    def param_count(self) -> int:
        return sum(p.param_count for p in self.params())

    def forward(self, x: np.ndarray) -> np.ndarray:
        for layer in self.layers:
            x = layer.forward(x)
        return x

    def backward(self, grad: np.ndarray) -> np.ndarray:
        for layer in reversed(self.layers):
            grad = layer.backward(grad)
        return grad

    def predict(self, x: np.ndarray) -> np.ndarray:
        """Argmax labels for a batch [N,1,48,48]; ties go to the lower class."""
        return self.forward(x).argmax(axis=-1)

    def state(self):
        return [(p.w.copy(), p.b.copy()) for p in self.params()]

    def load_state(self, state):
        for p, (w, b) in zip(self.params(), state):
            p.w[...] = w
            p.b[...] = b


def build_network(seed: int, dtype=np.float32) -> Network:
    """Deterministic construction from a 64-bit seed."""
    layers = [
        Conv2D(1, 6, 5, seed=rand.derive_seed(seed, 1), dtype=dtype),
        ReLU(),
        MaxPool2x2(),
        Conv2D(6, 16, 3, seed=rand.derive_seed(seed, 2), dtype=dtype),
        ReLU(),
        MaxPool2x2(),
        Flatten(),
        Dense(1600, 120, seed=rand.derive_seed(seed, 3), dtype=dtype),
        ReLU(),
        Dense(120, 84, seed=rand.derive_seed(seed, 4), dtype=dtype),
        ReLU(),
        Dense(84, 10, seed=rand.derive_seed(seed, 5), dtype=dtype),
    ]
    net = Network(layers)
    assert net.param_count == PARAM_COUNT
    return net


# ---------------------------------------------------------------- dataset


@dataclass
class Dataset:
    samples: list  # (BinaryMask 48x48, label)
    class_names: list = field(default_factory=lambda: [f"class{i}" for i in range(NUM_CLASSES)])

    def __len__(self):
        return len(self.samples)

    def as_arrays(self):
        x = np.stack([m.bits for m, _ in self.samples]).astype(np.float32)[:, None]
        y = np.array([lbl for _, lbl in self.samples], dtype=np.int64)
        return x, y


def otsu_threshold(gray: np.ndarray) -> int:
    """Threshold t in [0,255] maximizing between-class variance of
    {<=t} vs {>t}; lowest t wins ties. Pixels > t form the bright class."""
    hist = np.bincount(gray.ravel(), minlength=256).astype(np.float64)
    total = hist.sum()
    omega = hist.cumsum() / total
    mu = (hist * np.arange(256)).cumsum() / total
    mu_t = mu[-1]
    with np.errstate(divide="ignore", invalid="ignore"):
        sigma_b = (mu_t * omega - mu) ** 2 / (omega * (1.0 - omega))
    sigma_b = np.nan_to_num(sigma_b, nan=-1.0, posinf=-1.0, neginf=-1.0)
    return int(sigma_b.argmax())


def binarize(gray: np.ndarray, mode: str = "otsu", threshold: int = 128) -> BinaryMask:
    """'otsu': bright side of the Otsu split; 'fixed': pixel >= threshold."""
    if mode == "otsu":
        t = otsu_threshold(gray)
        return BinaryMask(gray > t)
    if mode == "fixed":
        return BinaryMask(gray >= threshold)
    raise ValueError(f"unknown binarize mode {mode!r}")


def load_dataset(root, mode: str = "otsu", threshold: int = 128) -> Dataset:
    """Load root/<label>/*.pgm into 48x48 binary masks, lexicographic order."""
    root = Path(root)
    label_dirs = sorted(d for d in root.iterdir() if d.is_dir() and d.name.isdigit())
    labels = sorted(int(d.name) for d in label_dirs)
    if labels != list(range(len(labels))):
        raise NonContiguousLabels(f"class directories {labels} are not 0..{len(labels) - 1}")
    if not labels:
        raise EmptyClass(f"no class directories under {root}")
    samples = []
    for d in sorted(label_dirs, key=lambda p: int(p.name)):
        files = sorted(d.glob("*.pgm"))
        if not files:
            raise EmptyClass(f"class directory {d} has no .pgm files")
        for f in files:
            img = load_pnm(f.read_bytes())
            if img.width != INPUT_SIDE or img.height != INPUT_SIDE or img.channels != 1:
                raise WrongSize(f"{f}: expected {INPUT_SIDE}x{INPUT_SIDE} grayscale")
            samples.append((binarize(img.pixels[:, :, 0], mode, threshold), int(d.name)))
    return Dataset(samples)


# ---------------------------------------------------------------- training


@dataclass
class TrainReport:
    epochs: list  # (train_loss, train_acc, val_acc) per epoch
    seed: int
    hyper: Hyper
    best_val_acc: float
    best_state: list


def stratified_split(y: np.ndarray, split: float, seed: int):
    """Per-class deterministic shuffle; first `split` fraction trains."""
    rng = rand.generator(seed, 101)
    train_idx, val_idx = [], []
    for cls in np.unique(y):
        idx = np.flatnonzero(y == cls)
        idx = idx[rng.permutation(len(idx))]
        cut = int(round(split * len(idx)))
        cut = min(max(cut, 1), len(idx) - 1) if len(idx) > 1 else len(idx)
        train_idx.append(idx[:cut])
        val_idx.append(idx[cut:])
    return np.concatenate(train_idx), np.concatenate(val_idx)


def _accuracy(net: Network, x: np.ndarray, y: np.ndarray, batch: int = 256) -> float:
    hits = 0
    for i in range(0, len(x), batch):
        hits += int((net.predict(x[i : i + batch]) == y[i : i + batch]).sum())
    return hits / len(x)


def train(net: Network, data: Dataset, hyper: Hyper, split: float = 0.8) -> TrainReport:
    """Minibatch momentum SGD with a stratified split and seeded shuffles.

    Keeps the best-validation weights; deterministic for a fixed seed.
    """
    if not 0 < split < 1:
        raise ValueError("split must lie in (0, 1)")
    x, y = data.as_arrays()
    tr, va = stratified_split(y, split, hyper.seed)
    xt, yt, xv, yv = x[tr], y[tr], x[va], y[va]
    epochs_log = []
    best_acc = -1.0
    best_state = net.state()
    lr = hyper.learning_rate
    for epoch in range(hyper.epochs):
        if epoch > 0 and hyper.decay_every > 0 and epoch % hyper.decay_every == 0:
            lr *= hyper.lr_decay
        order = rand.generator(hyper.seed, 1000 + epoch).permutation(len(xt))
        losses = []
        hits = 0
        for i in range(0, len(order), hyper.batch_size):
            sel = order[i : i + hyper.batch_size]
            xb, yb = xt[sel], yt[sel]
            logits = net.forward(xb)
            loss, grad = softmax_xent_batch(logits, yb)
            net.backward(grad)
            sgd_step(net.params(), hyper, lr=lr)
            losses.append(loss)
            hits += int((logits.argmax(axis=-1) == yb).sum())
        val_acc = _accuracy(net, xv, yv)
        epochs_log.append((float(np.mean(losses)), hits / len(xt), val_acc))
        if val_acc > best_acc:
            best_acc = val_acc
            best_state = net.state()
    net.load_state(best_state)
    return TrainReport(epochs_log, hyper.seed, hyper, best_acc, best_state)


# -------------------------------------------------------------- evaluation


@dataclass
class ConfusionMatrix:
    counts: np.ndarray  # [true, predicted]
    class_names: list

    @property
    def accuracy(self) -> float:
        total = int(self.counts.sum())
        return float(np.trace(self.counts)) / total if total else 0.0

    def to_csv(self) -> str:
        lines = [",".join(self.class_names)]
        for row in self.counts:
            lines.append(",".join(str(int(v)) for v in row))
        lines.append(f"accuracy,{self.accuracy:.4f}")
        return "\n".join(lines) + "\n"


def evaluate(net: Network, data: Dataset, batch: int = 256):
    x, y = data.as_arrays()
    counts = np.zeros((NUM_CLASSES, NUM_CLASSES), dtype=np.int64)
    for i in range(0, len(x), batch):
        pred = net.predict(x[i : i + batch])
        for t, p in zip(y[i : i + batch], pred):
            counts[t, p] += 1
    cm = ConfusionMatrix(counts, data.class_names)
    return cm, cm.accuracy


# ------------------------------------------------------------ weight file

WEIGHTS_MAGIC = b"HGNW"
WEIGHTS_VERSION = 1
_KIND_CODES = {"conv": 1, "dense": 2}


def save_weights(net: Network) -> bytes:
    """Little-endian container with a trailing CRC32 of all prior bytes."""
    params = net.params()
    out = bytearray()
    out += WEIGHTS_MAGIC
    out += struct.pack("<II", WEIGHTS_VERSION, len(params))
    for p in params:
        if not np.all(np.isfinite(p.w)) or not np.all(np.isfinite(p.b)):
            raise ValueError("non-finite parameters cannot be serialized")
        dims = p.w.shape
        out += struct.pack("<BI", _KIND_CODES[p.kind], len(dims))
        out += struct.pack(f"<{len(dims)}I", *dims)
        out += p.w.astype("<f4").tobytes()
        out += p.b.astype("<f4").tobytes()
    out += struct.pack("<I", zlib.crc32(bytes(out)) & 0xFFFFFFFF)
    return bytes(out)


def load_weights(data: bytes) -> Network:
    """Parse a weight container into a freshly built network."""
    if len(data) < 12 + 4:
        raise TruncatedBody("weight file shorter than its fixed header")
    if data[:4] != WEIGHTS_MAGIC:
        raise BadMagic(f"bad magic {data[:4]!r}")
    (crc_stored,) = struct.unpack("<I", data[-4:])
    if zlib.crc32(data[:-4]) & 0xFFFFFFFF != crc_stored:
        raise ChecksumMismatch("CRC32 mismatch")
    version, count = struct.unpack("<II", data[4:12])
    if version != WEIGHTS_VERSION:
        raise VersionMismatch(f"unsupported version {version}")
    net = build_network(seed=0)
    params = net.params()
    if count != len(params):
        raise ShapeMismatch(f"expected {len(params)} layer records, found {count}")
    pos = 12
    body = data[:-4]
    for p in params:
        try:
            kind, rank = struct.unpack_from("<BI", body, pos)
            pos += 5
            dims = struct.unpack_from(f"<{rank}I", body, pos)
            pos += 4 * rank
        except struct.error as exc:
            raise TruncatedBody("layer record header truncated") from exc
        if kind != _KIND_CODES[p.kind] or dims != p.w.shape:
            raise ShapeMismatch(f"layer record {dims} does not match network {p.w.shape}")
        n_w = int(np.prod(dims))
        n_b = p.b.size
        need = 4 * (n_w + n_b)
        if pos + need > len(body):
            raise TruncatedBody("weight payload truncated")
        p.w[...] = np.frombuffer(body, dtype="<f4", count=n_w, offset=pos).reshape(dims)
        pos += 4 * n_w
        p.b[...] = np.frombuffer(body, dtype="<f4", count=n_b, offset=pos)
        pos += 4 * n_b
    if pos != len(body):
        raise ShapeMismatch("trailing bytes after last layer record")
    return net


def classify_mask(net: Network, mask: BinaryMask):
    """Predicted label and softmax confidence for one 48x48 mask."""
    if mask.width != INPUT_SIDE or mask.height != INPUT_SIDE:
        raise WrongSize(f"classifier input must be {INPUT_SIDE}x{INPUT_SIDE}")
    logits = net.forward(mask.bits.astype(np.float32)[None, None])[0]
    probs = softmax(logits.astype(np.float64))
    label = int(logits.argmax())
    return label, float(probs[label])
