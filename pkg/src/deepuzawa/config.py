"""Experiment configuration files, greymap targets and CSV output.

Config files are plain ``key = value`` text: one pair per line, ``#``
starts a comment, keys may appear once.  Unknown keys, duplicate keys,
missing required keys and unparseable values are all reported with the
offending key name and line number.

Recognised keys (defaults in parentheses):

  tag            experiment: sine1d | boundary_layer | sine2d | ac_sine |
                 ac_step | ac_image | fd_oracle | grad_check
  alpha          regularisation weight (1e-4)
  epsilon        Allen-Cahn interface width; required for ac_* tags
  rho            multiplier step (alpha / 4)
  variant        plain | augmented  (plain)
  beta           augmentation weight, required when variant = augmented
  n_uzawa        outer multiplier updates (500)
  n_sgd          inner optimiser steps per update (40)
  learning_rate  Adam step size (1e-3)
  n_points       collocation points per axis (201)
  seed           run seed (0)
  hidden_width   network width (64)
  hidden_depth   hidden layer count (3)
  batch_size     mini-batch size; full batch when absent
  image          greymap path, required for ac_image
  output_dir     run directory (runs/<tag>)
  eval_refine    extra evaluation grid refinement factor (1)
  oracle_method  uzawa | projected | gauss_seidel | direct | all  (uzawa)
  oracle_iters   multiplier updates for oracle runs (200)
  precision_dps  decimal digits for oracle arithmetic; float64 when absent
"""
from __future__ import annotations

import os
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, PgmError
from .geometry import CollocationSet

TAGS = ("sine1d", "boundary_layer", "sine2d", "ac_sine", "ac_step", "ac_image",
        "fd_oracle", "grad_check")
ORACLE_METHODS = ("uzawa", "projected", "gauss_seidel", "direct", "all")

_AC_TAGS = ("ac_sine", "ac_step", "ac_image")


@dataclass
class ExperimentConfig:
    tag: str
    alpha: float = 1e-4
    epsilon: float | None = None
    rho: float | None = None
    variant: str = "plain"
    beta: float | None = None
    n_uzawa: int = 500
    n_sgd: int = 40
    learning_rate: float = 1e-3
    n_points: int = 201
    seed: int = 0
    hidden_width: int = 64
    hidden_depth: int = 3
    batch_size: int | None = None
    image: str | None = None
    output_dir: str | None = None
    eval_refine: int = 1
    oracle_method: str = "uzawa"
    oracle_iters: int = 200
    precision_dps: int | None = None

    def __post_init__(self):
        if self.output_dir is None:
            self.output_dir = os.path.join("runs", self.tag)


def _parse_bool(text):
    if text.lower() in ("true", "yes", "1"):
        return True
    if text.lower() in ("false", "no", "0"):
        return False
    raise ValueError(f"not a boolean: {text}")


_SCHEMA = {
    "tag": str,
    "alpha": float,
    "epsilon": float,
    "rho": float,
    "variant": str,
    "beta": float,
    "n_uzawa": int,
    "n_sgd": int,
    "learning_rate": float,
    "n_points": int,
    "seed": int,
    "hidden_width": int,
    "hidden_depth": int,
    "batch_size": int,
    "image": str,
    "output_dir": str,
    "eval_refine": int,
    "oracle_method": str,
    "oracle_iters": int,
    "precision_dps": int,
}


def parse_config(path) -> ExperimentConfig:
    """Read and validate a key = value experiment file."""
    entries: dict[str, tuple[str, int]] = {}
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError("expected 'key = value'", line=lineno)
            key, _, value = line.partition("=")
            key = key.strip()
            value = value.strip()
            if key not in _SCHEMA:
                raise ConfigError("unknown key", key=key, line=lineno)
            if key in entries:
                raise ConfigError("duplicate key", key=key, line=lineno)
            if not value:
                raise ConfigError("empty value", key=key, line=lineno)
            entries[key] = (value, lineno)

    if "tag" not in entries:
        raise ConfigError("missing required key", key="tag")

    kwargs = {}
    for key, (text, lineno) in entries.items():
        try:
            kwargs[key] = _SCHEMA[key](text)
        except ValueError:
            raise ConfigError(
                f"cannot parse {text!r} as {_SCHEMA[key].__name__}", key=key, line=lineno
            ) from None
    cfg = ExperimentConfig(**kwargs)
    _validate(cfg, entries)
    return cfg


def _validate(cfg: ExperimentConfig, entries):
    def where(key):
        return entries[key][1] if key in entries else None

    if cfg.tag not in TAGS:
        raise ConfigError(f"unknown tag {cfg.tag!r}, expected one of {TAGS}",
                          key="tag", line=where("tag"))
    if not cfg.alpha > 0:
        raise ConfigError("alpha must be positive", key="alpha", line=where("alpha"))
    if cfg.tag in _AC_TAGS and cfg.epsilon is None:
        raise ConfigError(f"tag {cfg.tag!r} requires epsilon", key="epsilon")
    if cfg.epsilon is not None and not cfg.epsilon > 0:
        raise ConfigError("epsilon must be positive", key="epsilon", line=where("epsilon"))
    if cfg.variant not in ("plain", "augmented"):
        raise ConfigError("variant must be plain or augmented",
                          key="variant", line=where("variant"))
    if cfg.variant == "augmented" and cfg.beta is None:
        raise ConfigError("augmented variant requires beta", key="beta")
    if cfg.beta is not None and not cfg.beta > 0:
        raise ConfigError("beta must be positive", key="beta", line=where("beta"))
    if cfg.tag == "ac_image" and cfg.image is None:
        raise ConfigError("tag ac_image requires an image path", key="image")
    if cfg.n_uzawa < 1 or cfg.n_sgd < 1:
        raise ConfigError("n_uzawa and n_sgd must be at least 1",
                          key="n_uzawa" if cfg.n_uzawa < 1 else "n_sgd")
    if cfg.n_points < 3:
        raise ConfigError("n_points must be at least 3", key="n_points", line=where("n_points"))
    if cfg.eval_refine < 1:
        raise ConfigError("eval_refine must be at least 1",
                          key="eval_refine", line=where("eval_refine"))
    if cfg.oracle_method not in ORACLE_METHODS:
        raise ConfigError(f"oracle_method must be one of {ORACLE_METHODS}",
                          key="oracle_method", line=where("oracle_method"))
    if cfg.batch_size is not None and cfg.batch_size < 1:
        raise ConfigError("batch_size must be positive",
                          key="batch_size", line=where("batch_size"))


# ---------------------------------------------------------------------------
# greymap target ingestion


@dataclass
class ImageTarget:
    """Greyscale image mapped affinely onto [-1, 1] (the double-well minima)."""

    width: int
    height: int
    values: np.ndarray  # (height, width), row 0 at the top of the image

    def __post_init__(self):
        if self.width < 2 or self.height < 2:
            raise PgmError("image must be at least 2x2")


def load_pgm_target(path) -> ImageTarget:
    """Read a P2 (ascii) or P5 (binary) greymap and normalise to [-1, 1].

    Pixel value 0 maps to -1 and maxval to +1, exactly.
    """
    with open(path, "rb") as fh:
        data = fh.read()

    def tokens(buf):
        # header tokens; '#' comments run to end of line
        i = 0
        while i < len(buf):
            c = buf[i:i + 1]
            if c.isspace():
                i += 1
            elif c == b"#":
                j = buf.find(b"\n", i)
                i = len(buf) if j < 0 else j + 1
            else:
                j = i
                while j < len(buf) and not buf[j:j + 1].isspace() and buf[j:j + 1] != b"#":
                    j += 1
                yield i, buf[i:j]
                i = j

    it = tokens(data)
    try:
        _, magic = next(it)
    except StopIteration:
        raise PgmError("empty file") from None
    if magic not in (b"P2", b"P5"):
        raise PgmError(f"bad magic {magic!r}, expected P2 or P5")
    try:
        _, w_tok = next(it)
        _, h_tok = next(it)
        maxval_pos, maxval_tok = next(it)
        width, height, maxval = int(w_tok), int(h_tok), int(maxval_tok)
    except (StopIteration, ValueError):
        raise PgmError("truncated or malformed header") from None
    if maxval <= 0:
        raise PgmError(f"maxval must be positive, got {maxval}")
    n_pixels = width * height
    if magic == b"P5":
        start = maxval_pos + len(maxval_tok) + 1  # single whitespace after maxval
        bytes_per = 1 if maxval < 256 else 2
        raw = data[start:start + n_pixels * bytes_per]
        if len(raw) < n_pixels * bytes_per:
            raise PgmError("truncated pixel data")
        dtype = np.uint8 if bytes_per == 1 else ">u2"
        pixels = np.frombuffer(raw, dtype=dtype, count=n_pixels).astype(float)
    else:
        vals = []
        for _, tok in it:
            vals.append(tok)
            if len(vals) == n_pixels:
                break
        if len(vals) < n_pixels:
            raise PgmError("truncated pixel data")
        try:
            pixels = np.array([int(v) for v in vals], dtype=float)
        except ValueError:
            raise PgmError("non-numeric pixel data") from None
    if pixels.max() > maxval:
        raise PgmError("pixel value exceeds maxval")
    values = (2.0 * pixels / maxval - 1.0).reshape(height, width)
    return ImageTarget(width, height, values)


def sample_image_on_grid(img: ImageTarget, cset: CollocationSet) -> np.ndarray:
    """Bilinear sample of the image onto a 2d collocation set.

    The image spans the whole domain with pixel centres at the corners;
    row 0 sits at the top (largest second coordinate).
    """
    if cset.domain.dim != 2:
        raise ValueError("image targets need a 2d collocation set")
    (ax, bx), (ay, by) = cset.domain.bounds
    x = (cset.points[:, 0] - ax) / (bx - ax)
    y = (cset.points[:, 1] - ay) / (by - ay)
    px = x * (img.width - 1)
    py = (1.0 - y) * (img.height - 1)
    x0 = np.clip(np.floor(px).astype(int), 0, img.width - 2)
    y0 = np.clip(np.floor(py).astype(int), 0, img.height - 2)
    tx = px - x0
    ty = py - y0
    v = img.values
    return ((1 - ty) * ((1 - tx) * v[y0, x0] + tx * v[y0, x0 + 1])
            + ty * ((1 - tx) * v[y0 + 1, x0] + tx * v[y0 + 1, x0 + 1]))


# ---------------------------------------------------------------------------
# CSV emission
#
# Per-run directory schema shared by the network driver and the oracle:
#   Error.csv   update, state_l2_error, control_l2_error   (when exact known)
#   Loss.csv    update, misfit, multiplier_term, control_norm_term,
#               regulariser_term
#   State.csv   one state value per line, grid order
#   Control.csv one control value per line, grid order
#   meta.txt    key = value dump of the run setup (plus diverged_at if set)
# Floats are written with round-trip precision (repr).


def _write_csv(path, header, rows):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(repr(float(v)) if not isinstance(v, int) else str(v)
                             for v in row) + "\n")


def emit_csv(record, out_dir, meta: dict | None = None) -> list[str]:
    """Write the run-record CSVs; returns the list of files written.

    ``record`` needs ``loss_history`` (n, 4), ``u``, ``f`` and optionally
    ``state_errors`` / ``control_errors`` and ``diverged_at``; both
    :class:`deepuzawa.driver.RunRecord` and oracle histories adapt.
    """
    os.makedirs(out_dir, exist_ok=True)
    written = []

    state_errors = getattr(record, "state_errors", None)
    control_errors = getattr(record, "control_errors", None)
    if state_errors is not None and len(state_errors):
        path = os.path.join(out_dir, "Error.csv")
        rows = [(k, se, ce) for k, (se, ce) in enumerate(zip(state_errors, control_errors))]
        _write_csv(path, ("update", "state_l2_error", "control_l2_error"), rows)
        written.append(path)

    loss = getattr(record, "loss_history", None)
    if loss is None:
        loss = record.loss_parts  # oracle runs
    loss = np.asarray(loss, dtype=float)
    path = os.path.join(out_dir, "Loss.csv")
    rows = [(k, *loss[k]) for k in range(loss.shape[0])]
    _write_csv(path, ("update", "misfit", "multiplier_term", "control_norm_term",
                      "regulariser_term"), rows)
    written.append(path)

    for name, values in (("State.csv", record.u), ("Control.csv", record.f)):
        path = os.path.join(out_dir, name)
        _write_csv(path, (name[:-4].lower(),), [(v,) for v in np.asarray(values)])
        written.append(path)

    path = os.path.join(out_dir, "meta.txt")
    with open(path, "w", encoding="utf-8") as fh:
        for key, value in (meta or {}).items():
            fh.write(f"{key} = {value}\n")
        diverged = getattr(record, "diverged_at", None)
        if diverged is not None:
            fh.write(f"diverged_at = {diverged}\n")
    written.append(path)
    return written


def read_csv(path):
    """Round-trip reader for the files written by :func:`emit_csv`."""
    with open(path, "r", encoding="utf-8") as fh:
        header = fh.readline().strip().split(",")
        rows = [[float(v) for v in line.strip().split(",")] for line in fh if line.strip()]
    return header, np.array(rows)
