"""Dataset ingestion and persistence.

MNIST-style IDX files become a `MultinomialRegression`, match CSV files a
`PoissonSoccer` model. Datasets of every model kind are stored as `.npz`.
"""
import csv
import hashlib
import logging
from typing import Dict

import numpy as np

from ububu.errors import DataError
from ububu.models.gaussian import GaussianTarget, QuarticToy
from ububu.models.multinomial import MultinomialRegression
from ububu.models.poisson import PoissonSoccer
from ububu.models.potential import Potential

logger = logging.getLogger(__name__)

IDX_IMAGES = 2051
IDX_LABELS = 2049
MATCH_COLUMNS = ("round", "home", "away", "hg", "ag")


def read_idx(path: str, magic: int) -> np.ndarray:
    """Unsigned-byte IDX array; the header is a big-endian magic followed by one size per dimension."""
    with open(path, "rb") as f:
        raw = f.read()
    if len(raw) < 4:
        raise DataError(f"{path}: truncated IDX header")
    found = int(np.frombuffer(raw[:4], dtype=">u4")[0])
    if found != magic:
        raise DataError(f"{path}: bad IDX magic {found}, expected {magic}")
    ndim = magic & 0xFF
    header = 4 + 4 * ndim
    if len(raw) < header:
        raise DataError(f"{path}: truncated IDX header")
    dims = tuple(int(n) for n in np.frombuffer(raw[4:header], dtype=">u4"))
    size = int(np.prod(dims))
    if len(raw) - header < size:
        raise DataError(f"{path}: truncated IDX body, expected {size} bytes, found {len(raw) - header}")
    return np.frombuffer(raw[header:header + size], dtype=np.uint8).reshape(dims)


def downscale(images: np.ndarray, factor: int) -> np.ndarray:
    """Mean-pool (n, rows, cols) images over factor × factor blocks."""
    n, rows, cols = images.shape
    if factor < 1 or rows % factor or cols % factor:
        raise DataError(f"Downscale factor {factor} must divide the image size {rows}x{cols}")
    return images.reshape(n, rows // factor, factor, cols // factor, factor).mean(axis=(2, 4))


def ingest_mnist(images_path: str, labels_path: str, subsample: int = None, factor: int = 1,
                 prior_variance: float = 0.1) -> MultinomialRegression:
    """Covariates: flattened pixels scaled to [0, 1] plus an intercept; labels 0..9 become classes 1..10."""
    images = read_idx(images_path, IDX_IMAGES)
    labels = read_idx(labels_path, IDX_LABELS)
    if images.shape[0] != labels.shape[0]:
        raise DataError(f"{images.shape[0]} images but {labels.shape[0]} labels")
    if labels.size and labels.max() > 9:
        raise DataError(f"Label {int(labels.max())} out of range 0..9")
    if subsample is not None:
        images, labels = images[:subsample], labels[:subsample]
    pixels = downscale(images.astype(np.float64) / 255, factor).reshape(images.shape[0], -1)
    covariates = np.hstack([pixels, np.ones((pixels.shape[0], 1))])
    logger.info(f"Ingested {pixels.shape[0]} images with {covariates.shape[1]} covariates")
    return MultinomialRegression(covariates, labels.astype(np.int64) + 1, 10, prior_variance)


def _integer(value: str, column: str, row: int) -> int:
    try:
        return int(value)
    except (TypeError, ValueError):
        raise DataError(f"column '{column}': '{value}' is not an integer", row=row)


def ingest_matches(path: str, rw_variance: float = 0.01, prior_variance: float = 10.0) -> PoissonSoccer:
    """Rounds are numbered consecutively from the smallest to the largest round present."""
    rounds, home, away, hg, ag = [], [], [], [], []
    with open(path, "r", encoding="utf-8", newline="") as f:
        reader = csv.reader(f)
        header = next(reader, None)
        if header is None:
            raise DataError(f"{path}: missing header row")
        header = [h.strip() for h in header]
        unknown = sorted(set(header) - set(MATCH_COLUMNS))
        if unknown:
            raise DataError(f"unknown column '{unknown[0]}'", row=1)
        missing = [c for c in MATCH_COLUMNS if c not in header]
        if missing:
            raise DataError(f"missing column '{missing[0]}'", row=1)
        index = {name: header.index(name) for name in MATCH_COLUMNS}
        for row, line in enumerate(reader, start=2):
            if not line:
                continue
            if len(line) != len(header):
                raise DataError(f"expected {len(header)} fields, found {len(line)}", row=row)
            values = {name: line[i].strip() for name, i in index.items()}
            goals = _integer(values["hg"], "hg", row), _integer(values["ag"], "ag", row)
            if min(goals) < 0:
                raise DataError("goal counts must be non-negative", row=row)
            if values["home"] == values["away"]:
                raise DataError(f"team '{values['home']}' cannot play itself", row=row)
            rounds.append(_integer(values["round"], "round", row))
            home.append(values["home"])
            away.append(values["away"])
            hg.append(goals[0])
            ag.append(goals[1])
    if not rounds:
        raise DataError(f"{path}: no games")
    teams = sorted(set(home) | set(away))
    team_index = {name: i for i, name in enumerate(teams)}
    first, last = min(rounds), max(rounds)
    model = PoissonSoccer([r - first for r in rounds], [team_index[t] for t in home], [team_index[t] for t in away],
                          hg, ag, len(teams), last - first + 1, rw_variance, prior_variance, teams, first)
    logger.info(f"Ingested {len(rounds)} games, {len(teams)} teams, {last - first + 1} rounds")
    return model


def _arrays(potential: Potential) -> Dict[str, np.ndarray]:
    if isinstance(potential, MultinomialRegression):
        return {"covariates": potential.covariates, "labels": potential.labels,
                "n_classes": np.array(potential.n_classes), "prior_variance": np.array(potential.prior_variance)}
    if isinstance(potential, PoissonSoccer):
        return {"week": potential.week, "home": potential.home, "away": potential.away,
                "home_goals": potential.home_goals, "away_goals": potential.away_goals,
                "n_teams": np.array(potential.n_teams), "n_weeks": np.array(potential.n_weeks),
                "rw_variance": np.array(potential.rw_variance), "prior_variance": np.array(potential.prior_variance),
                "team_names": np.array(potential.team_names, dtype=str), "first_week": np.array(potential.first_week)}
    if isinstance(potential, GaussianTarget):
        arrays = {"precision": potential.precision, "center": potential.center}
        if potential.weights is not None:
            arrays["component_weights"] = potential.weights
        if isinstance(potential, QuarticToy):
            arrays["beta"] = np.array(potential.beta)
        return arrays
    raise DataError(f"Cannot store a dataset of {potential!r}")


def save_dataset(potential: Potential, path: str) -> str:
    arrays = _arrays(potential)
    with open(path, "wb") as f:
        np.savez(f, kind=np.array(potential.name), **arrays)
    return dataset_hash(potential)


def load_dataset(path: str) -> Potential:
    try:
        with np.load(path, allow_pickle=False) as data:
            arrays = {key: data[key] for key in data.files}
    except (OSError, ValueError) as e:
        raise DataError(f"{path}: cannot read dataset: {e}")
    kind = str(arrays.pop("kind", ""))
    if kind == MultinomialRegression.name:
        return MultinomialRegression(arrays["covariates"], arrays["labels"], int(arrays["n_classes"]),
                                     float(arrays["prior_variance"]))
    if kind == PoissonSoccer.name:
        return PoissonSoccer(arrays["week"], arrays["home"], arrays["away"], arrays["home_goals"],
                             arrays["away_goals"], int(arrays["n_teams"]), int(arrays["n_weeks"]),
                             float(arrays["rw_variance"]), float(arrays["prior_variance"]),
                             [str(t) for t in arrays["team_names"]], int(arrays["first_week"]))
    if kind == GaussianTarget.name:
        return GaussianTarget(arrays["precision"], arrays.get("component_weights"), arrays["center"])
    if kind == QuarticToy.name:
        return QuarticToy(arrays["precision"], float(arrays["beta"]), arrays.get("component_weights"),
                          arrays["center"])
    raise DataError(f"{path}: unknown dataset kind '{kind}'")


def dataset_hash(potential: Potential) -> str:
    """SHA-256 over the model kind and its arrays in sorted key order."""
    digest = hashlib.sha256(potential.name.encode("utf-8"))
    for key, value in sorted(_arrays(potential).items()):
        value = np.ascontiguousarray(value)
        digest.update(key.encode("utf-8"))
        digest.update(str(value.dtype).encode("utf-8"))
        digest.update(str(value.shape).encode("utf-8"))
        digest.update(value.tobytes())
    return digest.hexdigest()
