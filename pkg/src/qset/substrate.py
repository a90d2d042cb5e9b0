"""Steady heat spreading from a small on-chip source into the substrate.

The chip is modeled as an axisymmetric stack: a thin amorphous oxide layer
on a thick crystalline wafer, heated through a disk on the top surface
whose area equals the island footprint.  Both conductivities follow power
laws in temperature (kappa = c T^p), so the problem is strongly nonlinear
at millikelvin temperatures.

Discretization is cell-centered finite volumes on a stretched (r, z) grid
whose faces land exactly on the source radius and the layer interface.
Within one material the face conductivity uses the secant of the Kirchhoff
potential u(T) = integral kappa dT, which makes the scheme exact for the
transformed linear problem; the single interface row combines half-cell
conductances in series.  The nonlinear system is solved by damped Picard
iteration warm-started through a geometric power ramp.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.linalg import spsolve

from .errors import SolverError


@dataclass(frozen=True)
class SubstrateParams:
    """Geometry and material power laws, SI.

    Conductivities are kappa = coefficient * T**exponent in W m^-1 K^-1.
    The source is a disk of ``source_area`` centered on the axis of a
    cylindrical domain of ``domain_radius``; sides and bottom are held at
    the bath temperature, the rest of the top surface is adiabatic.
    """

    source_area: float = 0.45e-12
    oxide_thickness: float = 0.5e-6
    oxide_kappa_coefficient: float = 0.03
    oxide_kappa_exponent: float = 2.0
    silicon_thickness: float = 50.0e-6
    silicon_kappa_coefficient: float = 5.0
    silicon_kappa_exponent: float = 3.0
    domain_radius: float = 50.0e-6

    def __post_init__(self):
        for name in (
            "source_area",
            "oxide_thickness",
            "oxide_kappa_coefficient",
            "oxide_kappa_exponent",
            "silicon_thickness",
            "silicon_kappa_coefficient",
            "silicon_kappa_exponent",
            "domain_radius",
        ):
            v = getattr(self, name)
            if not (np.isfinite(v) and v > 0):
                raise ValueError(f"{name} must be positive and finite, got {v!r}")
        if self.domain_radius <= self.source_radius:
            raise ValueError("domain_radius must exceed the source radius")

    @property
    def source_radius(self) -> float:
        """Radius of the equal-area source disk."""
        return math.sqrt(self.source_area / math.pi)


@dataclass(frozen=True)
class GridSpec:
    """Cell counts of the stretched finite-volume mesh."""

    n_r_source: int = 8
    n_r_outer: int = 32
    n_z_oxide: int = 8
    n_z_silicon: int = 32

    def __post_init__(self):
        for name in ("n_r_source", "n_r_outer", "n_z_oxide", "n_z_silicon"):
            v = getattr(self, name)
            if not (isinstance(v, (int, np.integer)) and v >= 3):
                raise ValueError(f"{name} must be an integer >= 3, got {v!r}")

    def refined(self, factor: int = 2) -> "GridSpec":
        """A mesh with every cell count multiplied by ``factor``."""
        if factor < 1:
            raise ValueError(f"factor must be >= 1, got {factor!r}")
        return replace(
            self,
            n_r_source=self.n_r_source * factor,
            n_r_outer=self.n_r_outer * factor,
            n_z_oxide=self.n_z_oxide * factor,
            n_z_silicon=self.n_z_silicon * factor,
        )


@dataclass
class SubstrateField:
    """Converged temperature field and its summary scalars.

    ``temperature`` has shape (nz, nr) over cell centers ``z`` (measured
    downward from the top surface) and ``r``.  ``t_source`` is the
    area-averaged top-surface temperature of the source disk,
    ``t_peak`` the hottest surface point (on the axis), both in kelvin.
    ``flux_imbalance`` is |power in - power out| / power in, a discrete
    conservation check.
    """

    r: np.ndarray
    z: np.ndarray
    temperature: np.ndarray
    t_source: float
    t_peak: float
    t_bath: float
    power: float
    flux_imbalance: float
    iterations: int


def _geometric_faces(x0: float, x1: float, n: int) -> np.ndarray:
    """Faces from x0 to x1 with geometrically growing spacing (x0 > 0)."""
    return x0 * (x1 / x0) ** (np.arange(n + 1) / n)


def _build_mesh(params: SubstrateParams, grid: GridSpec):
    a = params.source_radius
    r_faces = np.concatenate(
        [
            np.linspace(0.0, a, grid.n_r_source + 1),
            _geometric_faces(a, params.domain_radius, grid.n_r_outer)[1:],
        ]
    )
    t_ox = params.oxide_thickness
    z_total = t_ox + params.silicon_thickness
    z_faces = np.concatenate(
        [
            np.linspace(0.0, t_ox, grid.n_z_oxide + 1),
            _geometric_faces(t_ox, z_total, grid.n_z_silicon)[1:],
        ]
    )
    return r_faces, z_faces


class _PowerLawMaterial:
    """kappa = c T^p and its Kirchhoff potential u = c T^(p+1)/(p+1)."""

    def __init__(self, coefficient: float, exponent: float):
        self.c = coefficient
        self.p = exponent

    def kappa(self, t: np.ndarray) -> np.ndarray:
        return self.c * np.asarray(t) ** self.p

    def potential(self, t: np.ndarray) -> np.ndarray:
        return self.c * np.asarray(t) ** (self.p + 1.0) / (self.p + 1.0)

    def secant_kappa(self, t1: np.ndarray, t2: np.ndarray) -> np.ndarray:
        """(u(t1) - u(t2)) / (t1 - t2), falling back to kappa(midpoint)."""
        t1 = np.asarray(t1, dtype=float)
        t2 = np.asarray(t2, dtype=float)
        diff = t1 - t2
        mid = 0.5 * (t1 + t2)
        close = np.abs(diff) <= 1e-9 * mid
        safe = np.where(close, 1.0, diff)
        sec = (self.potential(t1) - self.potential(t2)) / safe
        return np.where(close, self.kappa(mid), sec)


def solve_substrate(
    power: float,
    t_bath: float,
    params: SubstrateParams = SubstrateParams(),
    grid: GridSpec = GridSpec(),
    tol: float = 1e-9,
    max_iterations: int = 200,
    n_ramp_stages: int = 7,
) -> SubstrateField:
    """Solve the nonlinear heat equation for one source power (W).

    ``power`` enters as a uniform flux over the source disk; ``t_bath``
    (K) is imposed on the outer radius and the wafer bottom.  The power
    is ramped up geometrically over ``n_ramp_stages`` doublings, each
    stage converged by damped Picard iteration to a relative update
    below ``tol`` (intermediate stages are solved more loosely).

    Raises
    ------
    SolverError
        If any stage fails to converge within ``max_iterations``.
    """
    if not (np.isfinite(power) and power >= 0):
        raise ValueError(f"power must be non-negative and finite, got {power!r}")
    if not (np.isfinite(t_bath) and t_bath > 0):
        raise ValueError(f"t_bath must be positive and finite, got {t_bath!r}")

    r_faces, z_faces = _build_mesh(params, grid)
    nr = r_faces.size - 1
    nz = z_faces.size - 1
    r_c = 0.5 * (r_faces[:-1] + r_faces[1:])
    z_c = 0.5 * (z_faces[:-1] + z_faces[1:])
    dz = np.diff(z_faces)
    ring_area = math.pi * (r_faces[1:] ** 2 - r_faces[:-1] ** 2)

    oxide = _PowerLawMaterial(
        params.oxide_kappa_coefficient, params.oxide_kappa_exponent
    )
    silicon = _PowerLawMaterial(
        params.silicon_kappa_coefficient, params.silicon_kappa_exponent
    )
    is_oxide_row = z_c < params.oxide_thickness

    def material(j: int) -> _PowerLawMaterial:
        return oxide if is_oxide_row[j] else silicon

    # Uniform source flux over the top faces inside the source radius; the
    # mesh puts a face exactly at the source edge so the areas sum to it.
    flux_density = power / params.source_area
    source_cols = r_faces[1:] <= params.source_radius * (1.0 + 1e-12)
    source_in = np.where(source_cols, flux_density * ring_area, 0.0)

    n_cells = nz * nr
    idx = np.arange(n_cells).reshape(nz, nr)

    def assemble(t: np.ndarray):
        """Linear system A T = b with conductances frozen at field t."""
        rows: list[np.ndarray] = []
        cols: list[np.ndarray] = []
        vals: list[np.ndarray] = []
        diag = np.zeros(n_cells)
        b = np.zeros(n_cells)

        def couple(p, q, g):
            rows.extend([p, q])
            cols.extend([q, p])
            vals.extend([-g, -g])
            np.add.at(diag, p, g)
            np.add.at(diag, q, g)

        # Radial faces (same material along a row).
        for j in range(nz):
            mat = material(j)
            g = (
                mat.secant_kappa(t[j, :-1], t[j, 1:])
                * (2.0 * math.pi * r_faces[1:-1] * dz[j])
                / np.diff(r_c)
            )
            couple(idx[j, :-1], idx[j, 1:], g)
            # Outer Dirichlet rim.
            g_out = (
                mat.secant_kappa(t[j, -1], t_bath)
                * (2.0 * math.pi * r_faces[-1] * dz[j])
                / (r_faces[-1] - r_c[-1])
            )
            diag[idx[j, -1]] += g_out
            b[idx[j, -1]] += g_out * t_bath

        # Vertical faces.
        for j in range(nz - 1):
            d_upper = z_faces[j + 1] - z_c[j]
            d_lower = z_c[j + 1] - z_faces[j + 1]
            m_up, m_lo = material(j), material(j + 1)
            if m_up is m_lo:
                g = m_up.secant_kappa(t[j], t[j + 1]) * ring_area / (d_upper + d_lower)
            else:
                # Interface row: half-cell conductances in series.
                g = ring_area / (
                    d_upper / m_up.kappa(t[j]) + d_lower / m_lo.kappa(t[j + 1])
                )
            couple(idx[j], idx[j + 1], g)

        # Bottom Dirichlet.
        mat = material(nz - 1)
        g_bot = (
            mat.secant_kappa(t[-1], t_bath) * ring_area / (z_faces[-1] - z_c[-1])
        )
        diag[idx[-1]] += g_bot
        b[idx[-1]] += g_bot * t_bath

        rows.append(idx.ravel())
        cols.append(idx.ravel())
        vals.append(diag)
        a_mat = coo_matrix(
            (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
            shape=(n_cells, n_cells),
        ).tocsr()
        return a_mat, b

    def solve_stage(stage_power: float, t: np.ndarray, stage_tol: float):
        scale = stage_power / power if power > 0 else 0.0
        src = source_in * scale
        omega = 0.7
        last_update = np.inf
        for it in range(1, max_iterations + 1):
            a_mat, b = assemble(t)
            b[:nr] += src
            t_solve = spsolve(a_mat, b).reshape(nz, nr)
            update = float(np.max(np.abs(t_solve - t)))
            rise = max(float(np.max(t)) - t_bath, t_bath * 1e-6)
            if update > last_update * 1.02:
                omega = max(omega * 0.5, 0.1)
            else:
                omega = min(omega * 1.2, 1.0)
            t = t + omega * (t_solve - t)
            last_update = update
            if update <= stage_tol * rise:
                return t, it
        raise SolverError(
            "substrate Picard iteration did not converge",
            diagnostics={
                "stage_power": stage_power,
                "update": update,
                "tol": stage_tol,
                "iterations": max_iterations,
            },
        )

    t_field = np.full((nz, nr), t_bath)
    total_iterations = 0
    if power > 0:
        stage_powers = [power * 0.5**k for k in range(n_ramp_stages, -1, -1)]
        for stage_power in stage_powers:
            stage_tol = tol if stage_power == power else max(tol, 1e-7)
            t_field, its = solve_stage(stage_power, t_field, stage_tol)
            total_iterations += its

    # Surface temperatures: adiabatic top cells extrapolate flat, source
    # cells add the half-cell drop of the incoming flux.
    t_surface = t_field[0].copy()
    if power > 0:
        half_drop = flux_density * (0.5 * dz[0]) / oxide.kappa(t_field[0, source_cols])
        t_surface[source_cols] += half_drop
    src_area = ring_area[source_cols]
    t_source = float(np.sum(t_surface[source_cols] * src_area) / np.sum(src_area))
    t_peak = float(np.max(t_surface))

    # Discrete conservation: outflow through the Dirichlet rim and bottom.
    out = 0.0
    for j in range(nz):
        mat = material(j)
        g_out = (
            float(mat.secant_kappa(t_field[j, -1], t_bath))
            * (2.0 * math.pi * r_faces[-1] * dz[j])
            / (r_faces[-1] - r_c[-1])
        )
        out += g_out * (t_field[j, -1] - t_bath)
    mat = material(nz - 1)
    g_bot = mat.secant_kappa(t_field[-1], t_bath) * ring_area / (z_faces[-1] - z_c[-1])
    out += float(np.sum(g_bot * (t_field[-1] - t_bath)))
    imbalance = abs(power - out) / power if power > 0 else 0.0

    return SubstrateField(
        r=r_c,
        z=z_c,
        temperature=t_field,
        t_source=t_source,
        t_peak=t_peak,
        t_bath=t_bath,
        power=power,
        flux_imbalance=imbalance,
        iterations=total_iterations,
    )
