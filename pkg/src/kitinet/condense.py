"""Cosine-similarity condensation diagnostics over neuron weight vectors."""
from dataclasses import dataclass

import numpy as np

ZERO_ROW = 1e-12
DEFAULT_THRESHOLD = 0.95


@dataclass
class CondensationMatrix:
    values: np.ndarray
    layer_index: int = 0
    epoch: int = 0

    @property
    def m(self):
        return self.values.shape[0]


def cosine_matrix(weight_matrix, layer_index=0, epoch=0):
    """Pairwise cosine similarity between rows (each neuron's incoming weights).

    Rows with norm below 1e-12 give 0 against everything, themselves included.
    """
    W = np.atleast_2d(np.asarray(weight_matrix, dtype=np.float64))
    if W.shape[0] < 1:
        raise ValueError("need at least one row")
    norms = np.sqrt(np.einsum("ij,ij->i", W, W))
    live = norms >= ZERO_ROW
    U = np.zeros_like(W)
    U[live] = W[live] / norms[live, None]
    D = np.clip(U @ U.T, -1.0, 1.0)
    idx = np.flatnonzero(live)
    D[idx, idx] = 1.0
    return CondensationMatrix(D, layer_index, epoch)


def condensation_score(matrix, threshold=DEFAULT_THRESHOLD):
    """Fraction of distinct neuron pairs with |cosine| above ``threshold``."""
    if not 0.0 < threshold < 1.0:
        raise ValueError("threshold must lie in (0, 1)")
    values = matrix.values if isinstance(matrix, CondensationMatrix) else np.asarray(matrix)
    m = values.shape[0]
    if m < 2:
        return 0.0
    iu, ju = np.triu_indices(m, k=1)
    return float(np.mean(np.abs(values[iu, ju]) > threshold))


def export_heatmap(matrix):
    """CSV text: ``# layer=<i> epoch=<e> m=<m>`` header, then m rows of m values."""
    lines = [f"# layer={matrix.layer_index} epoch={matrix.epoch} m={matrix.m}"]
    lines += [",".join(format(float(x), ".17g") for x in row) for row in matrix.values]
    return "\n".join(lines) + "\n"


def parse_heatmap(text):
    lines = text.strip("\n").split("\n")
    header = lines[0]
    if not header.startswith("# "):
        raise ValueError("missing heatmap header")
    meta = dict(item.split("=") for item in header[2:].split())
    values = np.array([[float(x) for x in line.split(",")] for line in lines[1:]])
    if values.shape != (int(meta["m"]), int(meta["m"])):
        raise ValueError(f"heatmap body has shape {values.shape}, header says m={meta['m']}")
    return CondensationMatrix(values, int(meta["layer"]), int(meta["epoch"]))
