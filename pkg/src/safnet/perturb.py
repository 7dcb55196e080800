"""Adversarial / nonsense / noisy sample generation and PSNR.

The fast-gradient-sign attack picks, per sample, the incorrect category
whose loss has the largest-L1-norm input gradient, then steps the image
*down* that category's loss surface:

    X_adv = clamp(X - 255*beta*sign(dL/dX at l_max), 0, 255)

(the step direction makes the chosen wrong category more likely). Nonsense
samples start from stationary Gaussian noise rescaled per image to cover
0..255 before the same step; noisy samples add plain scaled Gaussian noise.
Gradients are taken through the eval-mode forward pass: attacks target the
deployed model. All generation is deterministic given (model, seed, config).
"""

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError
from .losses import NONSENSE
from .models import PIXEL_SCALE

ATTACK_KINDS = ("adversarial", "nonsense", "noisy")

NOISE_ORIGIN = "noise"


@dataclass(frozen=True)
class AttackConfig:
    kind: str
    beta: float
    seed: int = 0
    pixel_scale: float = PIXEL_SCALE

    def __post_init__(self):
        if self.kind not in ATTACK_KINDS:
            raise ConfigError(f"unknown perturbation kind {self.kind!r}; expected one of {ATTACK_KINDS}")
        if self.beta < 0:
            raise ConfigError(f"perturbation strength beta must be >= 0, got {self.beta}")


@dataclass
class PerturbedSample:
    image: np.ndarray
    origin: object  # clean-sample index, or NOISE_ORIGIN
    true_label: int  # category index, or NONSENSE
    beta: float
    kind: str


def _input_gradients(model, images, label, loss_params, train=False):
    """Per-sample input gradient of the model's loss taken at a fixed label."""
    scores = model.forward(images, train=train)
    labels = np.full(len(images), label, dtype=np.int64)
    _, dscores = model.loss_and_grad(scores, labels, loss_params)
    return model.backward_from_scores(dscores)


def fgs_direction(model, images, loss_params=None, exclude_labels=None, batch_size=256):
    """Signed descent direction of the strongest incorrect-category loss.

    Returns (directions, l_max): per-sample sign pattern in {-1, 0, +1} and
    the selected category. ``exclude_labels`` removes each sample's true
    label from the candidate set; pass None (nonsense bases) to rank all
    categories. The direction is independent of beta, so one call serves a
    whole strength sweep.
    """
    images = np.asarray(images)
    n = len(images)
    n_classes = model.n_classes
    directions = np.empty(images.shape, dtype=images.dtype)
    l_max = np.empty(n, dtype=np.int64)
    for start in range(0, n, batch_size):
        chunk = images[start:start + batch_size]
        m = len(chunk)
        grads = np.empty((n_classes,) + chunk.shape, dtype=np.float64)
        norms = np.empty((n_classes, m))
        for cand in range(n_classes):
            g = _input_gradients(model, chunk, cand, loss_params)
            grads[cand] = g
            norms[cand] = np.abs(g).reshape(m, -1).sum(axis=1)
        if exclude_labels is not None:
            excl = np.asarray(exclude_labels[start:start + batch_size])
            valid = excl >= 0  # NONSENSE-labeled samples exclude nothing
            norms[excl[valid], np.arange(m)[valid]] = -np.inf
        pick = norms.argmax(axis=0)
        l_max[start:start + m] = pick
        chosen = grads[pick, np.arange(m)]
        directions[start:start + m] = -np.sign(chosen)
    return directions, l_max


def apply_fgs(images, directions, beta, pixel_scale=PIXEL_SCALE):
    """One sign step of strength beta, clamped to the valid pixel range."""
    out = images + pixel_scale * beta * directions
    return np.clip(out, 0.0, pixel_scale).astype(images.dtype)


def fgs_adversarial(model, image, true_label, loss_params=None, beta=0.1):
    """Adversarial version of one clean sample (pixel range 0..255)."""
    if beta < 0:
        raise ConfigError(f"perturbation strength beta must be >= 0, got {beta}")
    batch = np.asarray(image)[None]
    directions, _ = fgs_direction(model, batch, loss_params, exclude_labels=[true_label])
    adv = apply_fgs(batch, directions, beta)[0]
    return PerturbedSample(adv, origin=0, true_label=int(true_label), beta=beta, kind="adversarial")


def fgs_adversarial_batch(model, images, labels, loss_params=None, beta=0.1, batch_size=256):
    directions, _ = fgs_direction(model, images, loss_params,
                                  exclude_labels=labels, batch_size=batch_size)
    return apply_fgs(images, directions, beta)


def rescale_noise_to_pixel_range(noise, pixel_scale=PIXEL_SCALE):
    """Affine map per image so its min lands at 0 and its max at pixel_scale."""
    flat = noise.reshape(len(noise), -1)
    lo = flat.min(axis=1).reshape((-1,) + (1,) * (noise.ndim - 1))
    hi = flat.max(axis=1).reshape(lo.shape)
    span = np.where(hi > lo, hi - lo, 1.0)
    return (noise - lo) / span * pixel_scale


def nonsense_base_images(count, shape, seed, mean=0.0, std=1.0):
    """Stationary Gaussian noise images rescaled to cover 0..255 per image."""
    rng = np.random.default_rng(seed)
    noise = rng.normal(mean, std, (count,) + tuple(shape))
    return rescale_noise_to_pixel_range(noise).astype(np.float32)


def nonsense_batch(count, shape, beta, model=None, seed=0, loss_params=None,
                   mean=0.0, std=1.0):
    """Nonsense samples: rescaled noise, plus the sign step when beta > 0.

    With no true label every meaningful category is a candidate for the
    gradient-ranking rule. beta == 0 returns the pure rescaled noise.
    """
    base = nonsense_base_images(count, shape, seed, mean, std)
    if beta > 0:
        if model is None:
            raise ConfigError("nonsense generation with beta > 0 needs a trained model for the sign step")
        directions, _ = fgs_direction(model, base, loss_params, exclude_labels=None)
        images = apply_fgs(base, directions, beta)
    else:
        images = base
    return [PerturbedSample(img, origin=NOISE_ORIGIN, true_label=NONSENSE, beta=beta, kind="nonsense")
            for img in images]


def noisy_sample(image, beta, seed):
    """Clean sample plus unit Gaussian noise scaled by 255*beta, clamped."""
    rng = np.random.default_rng(seed)
    noise = rng.standard_normal(np.asarray(image).shape)
    out = np.clip(image + PIXEL_SCALE * beta * noise, 0.0, PIXEL_SCALE).astype(np.float32)
    return PerturbedSample(out, origin=0, true_label=NONSENSE, beta=beta, kind="noisy")


def noisy_batch(images, beta, seed):
    rng = np.random.default_rng(seed)
    noise = rng.standard_normal(np.asarray(images).shape)
    return np.clip(images + PIXEL_SCALE * beta * noise, 0.0, PIXEL_SCALE).astype(np.float32)


def psnr(beta):
    """PSNR of a strength-beta sign perturbation on the 0..255 scale, in dB."""
    if beta == 0:
        return np.inf
    return -20.0 * np.log10(beta)


def psnr_images(a, b):
    """10*log10(255^2 / MSE) between two images; +inf for identical inputs."""
    mse = float(np.mean((np.asarray(a, dtype=np.float64) - np.asarray(b, dtype=np.float64)) ** 2))
    if mse == 0.0:
        return np.inf
    return 10.0 * np.log10(PIXEL_SCALE**2 / mse)


# ---- sample-set archive -------------------------------------------------
#
# Directory layout: one .npy tensor stack per (kind, beta) group plus
# manifest.jsonl. The first manifest line is a header record tying the
# archive to the generating checkpoint/config; every following line
# describes one sample. Identical (checkpoint, seed, config) runs produce
# byte-identical archives, so records carry no timestamps.


def _group_filename(kind, beta):
    return f"{kind}_beta{beta:.3f}.npy"


def write_sample_archive(out_dir, groups, header):
    """Persist perturbed-sample groups.

    ``groups`` is a list of dicts with keys kind, beta, seed, images (N,...),
    labels (N,), origins (N, ints; -1 for noise bases). ``header`` carries
    provenance (checkpoint hash, config hash, dataset).
    """
    import json
    from pathlib import Path

    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    lines = [json.dumps({"record": "header", **header}, sort_keys=True)]
    for group in groups:
        fname = _group_filename(group["kind"], group["beta"])
        np.save(out_dir / fname, np.asarray(group["images"], dtype=np.float32))
        for i in range(len(group["labels"])):
            origin = int(group["origins"][i])
            lines.append(json.dumps({
                "record": "sample",
                "file": fname,
                "index": i,
                "kind": group["kind"],
                "beta": group["beta"],
                "seed": group["seed"],
                "origin": NOISE_ORIGIN if origin < 0 else origin,
                "label": int(group["labels"][i]),
            }, sort_keys=True))
    (out_dir / "manifest.jsonl").write_text("\n".join(lines) + "\n")


def read_sample_archive(in_dir):
    """Load an archive back as (header, {(kind, beta): group dict})."""
    import json
    from pathlib import Path

    in_dir = Path(in_dir)
    lines = (in_dir / "manifest.jsonl").read_text().splitlines()
    header = json.loads(lines[0])
    if header.get("record") != "header":
        raise ConfigError(f"{in_dir}: manifest does not start with a header record")
    groups = {}
    for line in lines[1:]:
        rec = json.loads(line)
        key = (rec["kind"], rec["beta"])
        g = groups.setdefault(key, {"kind": rec["kind"], "beta": rec["beta"],
                                    "seed": rec["seed"], "file": rec["file"],
                                    "labels": [], "origins": []})
        g["labels"].append(rec["label"])
        g["origins"].append(-1 if rec["origin"] == NOISE_ORIGIN else rec["origin"])
    for key, g in groups.items():
        g["images"] = np.load(in_dir / g.pop("file"))
        g["labels"] = np.asarray(g["labels"], dtype=np.int64)
        g["origins"] = np.asarray(g["origins"], dtype=np.int64)
        if len(g["images"]) != len(g["labels"]):
            raise ConfigError(f"{in_dir}: group {key} has {len(g['images'])} tensors "
                              f"but {len(g['labels'])} manifest records")
    return header, groups
