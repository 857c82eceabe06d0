"""Per-element regularity indicators and the combined quality score.

The four indicators measure kernel-to-area ratio, edge/area balance against
the diameter, edge count, and uniformity of aligned edge runs; the combined
score is sqrt(rho1*(rho2+rho3+rho4)/3), zero exactly for non-star-shaped
cells and approaching one for squares and equilateral triangles.
"""

import csv
from dataclasses import dataclass

import numpy as np

from . import _kernels, geometry
from .geometry import COLLINEAR_TOL
from .mesh import Cell, PolygonalMesh

KERNEL_REL_TOL = 1e-14  # kernels below this relative area count as empty


@dataclass(frozen=True)
class QualityScores:
    rho1: float
    rho2: float
    rho3: float
    rho4: float
    rho: float

    def as_tuple(self):
        return (self.rho1, self.rho2, self.rho3, self.rho4, self.rho)


def scores_from_points(points, tol=COLLINEAR_TOL) -> QualityScores:
    pts = geometry.as_points(points)
    r1, r2, r3, r4, r = _kernels.quality_scores(pts, tol, KERNEL_REL_TOL)
    return QualityScores(float(r1), float(r2), float(r3), float(r4), float(r))


def rho1(cell: Cell) -> float:
    """Kernel area over cell area; 1 convex, 0 when not star-shaped."""
    return scores_from_points(cell.points).rho1


def rho2(cell: Cell) -> float:
    """min(sqrt(area), shortest edge) / diameter."""
    return scores_from_points(cell.points).rho2


def rho3(cell: Cell) -> float:
    """3 / number of boundary edges."""
    return 3.0 / cell.n_vertices


def rho4(cell: Cell) -> float:
    """Worst shortest/longest edge ratio over maximal aligned edge runs."""
    return scores_from_points(cell.points).rho4


def rho(cell: Cell) -> QualityScores:
    """All indicators plus the combined score for one cell."""
    return scores_from_points(cell.points)


@dataclass
class QualityReport:
    scores: list            # QualityScores per cell
    min_rho: float
    mean_rho: float
    histogram: np.ndarray   # 10 bins over [0, 1]
    bin_edges: np.ndarray


def mesh_quality_report(mesh: PolygonalMesh, tol=COLLINEAR_TOL) -> QualityReport:
    scores = [scores_from_points(mesh.points[ids], tol) for ids in mesh.cells]
    rhos = np.array([s.rho for s in scores])
    hist, edges = np.histogram(rhos, bins=10, range=(0.0, 1.0))
    return QualityReport(scores, float(rhos.min()), float(rhos.mean()), hist, edges)


def write_quality_csv(report: QualityReport, path):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["cell_id", "rho1", "rho2", "rho3", "rho4", "rho"])
        for i, s in enumerate(report.scores):
            w.writerow([i, repr(s.rho1), repr(s.rho2), repr(s.rho3),
                        repr(s.rho4), repr(s.rho)])
