"""Audits of universal eigenvalue inequalities on discretized surfaces.

Every audit record compares a spectral left-hand side against a
geometric right-hand side and reports lhs, rhs, slack = rhs - lhs and a
pass flag.  The catalog for closed surfaces (m = 2 throughout):

==========================  ====  =====================================
id                          p     statement (lambda ascending, 1-based)
==========================  ====  =====================================
gap-curvature-integral      0,1   sum_{l<=m} lam_{j+l} <= 4[(1+m/4) lam_j
                                    - int <R_p w, w> + 1/4 int |H|^2 |w|^2]
gap-curvature-sup           0,1   ... with inf K and sup |H|^2 in place
                                    of the integrals
gap-phi-integral            0-2   sum_{l<=m} lam_{j+l} <= 4[(1+m/4) lam_j
                                    + int phi |w|^2]
gap-phi-sup                 0-2   ... with the sup norm of phi
gap-phi-first               0-2   j = 1 only, fully geometric right side
recursion-basic             0-2   lam_j <= (1+4/m)^{j-1} J_p
                                    + ((1+4/m)^{j-1} - 1) ||phi||
recursion-sharp             0-2   lam_{j+m} <= 4[d1 J_p' + d2 ||phi||]
asada                       1     lam_1 <= J_p
reilly                      0     lam_2 <= (1/(m Vol)) int |H|^2
reilly-sum                  0     sum_{k<=m} lam_{k+1} <= (1/Vol) int |H|^2
==========================  ====  =====================================

with J_p = (p / (m (m-1) Vol)) int [(m-p)|H|^2 + (p-1)|h|^2] and
R_0 = 0, R_1 = K id.  The Dirichlet-with-potential catalog adds
dirichlet-potential-integral / -sup, dirichlet-symmetric-space for
domains in a round sphere, levitin-parnovski for flat zero-potential
domains, and the classical payne-polya-weinberger / hile-protter / yang
chains.

A record passes when lhs <= rhs + (tol_audit + allowance) * scale with
scale = max(|lhs|, |rhs|, top computed eigenvalue); the additive form
keeps audits meaningful when the right side is exactly zero (kernel
rows).  ``allowance`` absorbs discretization error and should be set
from a two-refinement Richardson comparison.
"""

from __future__ import annotations

import csv
import io
import json
import math
from collections import namedtuple

import numpy as np

from .curvature import curvature_data, phi_field
from .dec import dirichlet_laplacian, hodge_laplacian, hodge_star
from .eigensolve import solve_pair
from .mesh import surface_measures

__all__ = ["AuditError", "DensityField", "reconstruct_density",
           "integrate_against", "whitney_face_mass", "discretization_allowance",
           "closed_spectra", "audit_closed", "audit_dirichlet", "emit_report"]

M_DIM = 2
AUDIT_TOL = 1e-6
# Reconstructed densities must integrate to 1; the raw integral before
# renormalization is allowed to drift only this far.
DENSITY_FACTOR_RANGE = (0.99, 1.01)


class AuditError(RuntimeError):
    """An audit input or result is unusable (bad density, non-finite value)."""


DensityField = namedtuple("DensityField", ["values", "weights", "domain", "factor"])
DensityField.__doc__ += """

Pointwise squared-magnitude density of an eigenform, normalized so that
sum(weights * values) == 1.  ``domain`` is "vertex" or "face" and
``factor`` is the raw integral before renormalization (the deviation of
the interpolated norm from the lumped norm the solver used).
"""


# -- Whitney interpolation -------------------------------------------------


def _barycentric_gradients(mesh):
    """Gradients of the three barycentric coordinates per face, (F, 3, d).

    grad lambda_a is orthogonal to the opposite edge within the face
    plane, has norm 1/height_a, and works in any ambient dimension.
    """
    tri = mesh.vertices[mesh.faces]
    grads = np.empty_like(tri)
    for a in range(3):
        pa = tri[:, a]
        pb = tri[:, (a + 1) % 3]
        pc = tri[:, (a + 2) % 3]
        u = pc - pb
        u /= np.linalg.norm(u, axis=1, keepdims=True)
        w = pa - pb
        w = w - np.einsum("ij,ij->i", w, u)[:, None] * u
        grads[:, a] = w / np.einsum("ij,ij->i", w, w)[:, None]
    return grads


def whitney_face_mass(mesh):
    """Per-face 3x3 mass matrices of the Whitney 1-form basis, (F, 3, 3).

    Entry (s, t) is the integral over the face of <W_es, W_et> for the
    edges in ``mesh.face_edges`` order, with each W defined by the
    edge's canonical (tail < head) orientation.  Exact, via

        int_T <W_ij, W_kl> = (A/12) [ (1 + d_ik) g_jl - (1 + d_il) g_jk
                                      - (1 + d_jk) g_il + (1 + d_jl) g_ik ]

    where g is the Gram matrix of the barycentric gradients.
    """
    grads = _barycentric_gradients(mesh)
    gram = np.einsum("fad,fbd->fab", grads, grads)
    fa, _, _ = surface_measures(mesh)

    # local corner index (0, 1, 2) of each edge endpoint within its face
    tails = mesh.edges[mesh.face_edges, 0]
    heads = mesh.edges[mesh.face_edges, 1]
    loc_tail = np.empty_like(tails)
    loc_head = np.empty_like(heads)
    for corner in range(3):
        loc_tail[tails == mesh.faces[:, corner][:, None]] = corner
        loc_head[heads == mesh.faces[:, corner][:, None]] = corner

    n_faces = mesh.num_faces
    rows = np.arange(n_faces)
    local = np.empty((n_faces, 3, 3))
    for s in range(3):
        i, j = loc_tail[:, s], loc_head[:, s]
        for t in range(3):
            k, l = loc_tail[:, t], loc_head[:, t]
            term = ((1.0 + (i == k)) * gram[rows, j, l]
                    - (1.0 + (i == l)) * gram[rows, j, k]
                    - (1.0 + (j == k)) * gram[rows, i, l]
                    + (1.0 + (j == l)) * gram[rows, i, k])
            local[:, s, t] = fa / 12.0 * term
    return local


def reconstruct_density(mesh, p, vec, face_mass=None):
    """Pointwise squared-magnitude density of a p-eigenform coefficient vector.

    p = 0: density u^2 on vertices, weighted by lumped vertex areas.
    p = 1: per-face average of |w|^2 under Whitney interpolation of the
    edge coefficients.  p = 2: (coefficient / face area)^2 per face.
    The result is renormalized to unit total integral; the raw integral
    is returned as ``factor`` and must lie within DENSITY_FACTOR_RANGE.
    """
    vec = np.asarray(vec, dtype=float)
    if p == 0:
        _, va, _ = surface_measures(mesh)
        raw = vec ** 2
        factor = float(va @ raw)
        values, weights, domain = raw, va, "vertex"
    elif p == 1:
        if face_mass is None:
            face_mass = whitney_face_mass(mesh)
        fa, _, _ = surface_measures(mesh)
        x = vec[mesh.face_edges]
        per_face = np.einsum("fs,fst,ft->f", x, face_mass, x)
        factor = float(per_face.sum())
        values, weights, domain = per_face / fa, fa, "face"
    elif p == 2:
        fa, _, _ = surface_measures(mesh)
        raw = (vec / fa) ** 2
        factor = float(fa @ raw)
        values, weights, domain = raw, fa, "face"
    else:
        raise ValueError(f"form degree must be 0, 1 or 2, got {p}")
    lo, hi = DENSITY_FACTOR_RANGE
    if not (lo <= factor <= hi):
        raise AuditError(
            f"p={p} density integrates to {factor:.6f} before renormalization, "
            f"outside [{lo}, {hi}]; the interpolated and lumped norms disagree")
    return DensityField(values / factor, weights, domain, factor)


def integrate_against(mesh, density, vertex_field):
    """Integral of a vertex scalar field against a reconstructed density.

    Face-supported densities see the field through its per-face corner
    average.
    """
    field = np.asarray(vertex_field, dtype=float)
    if density.domain == "vertex":
        return float(np.sum(density.weights * density.values * field))
    face_avg = field[mesh.faces].mean(axis=1)
    return float(np.sum(density.weights * density.values * face_avg))


# -- audit mechanics -------------------------------------------------------


def _finite(x, what):
    if not math.isfinite(x):
        raise AuditError(f"non-finite value in {what}: {x!r}")
    return float(x)


def _record(ineq, p, j, lhs, rhs, terms, tol_audit, allowance, scale):
    lhs = _finite(lhs, f"{ineq} lhs")
    rhs = _finite(rhs, f"{ineq} rhs")
    margin = (tol_audit + allowance) * max(abs(lhs), abs(rhs), scale)
    return {
        "ineq": ineq,
        "p": p,
        "j": j,
        "lhs": lhs,
        "rhs": rhs,
        "slack": rhs - lhs,
        "pass": bool(lhs <= rhs + margin),
        "terms": {**{k: _finite(v, f"{ineq} term {k}") if isinstance(v, float) else v
                     for k, v in terms.items()},
                  "tol_audit": tol_audit, "allowance": allowance, "margin": margin},
    }


def _sort_records(records):
    records.sort(key=lambda r: (r["ineq"], -1 if r["p"] is None else r["p"], r["j"]))
    return records


def discretization_allowance(fine, coarse):
    """Audit tolerance from a Richardson comparison of two refinements.

    ``fine`` and ``coarse`` map form degree to ascending eigenvalue
    arrays.  Returns three times the worst relative difference over the
    shared indices, with kernel-level eigenvalues excluded.
    """
    worst = 0.0
    for p, vals_f in fine.items():
        vals_f = np.asarray(getattr(vals_f, "eigenvalues", vals_f), dtype=float)
        vals_c = np.asarray(getattr(coarse[p], "eigenvalues", coarse[p]), dtype=float)
        n = min(len(vals_f), len(vals_c))
        vals_f, vals_c = vals_f[:n], vals_c[:n]
        floor = 1e-6 * max(vals_f.max(), 1e-300)
        live = vals_f > floor
        if live.any():
            rel = np.abs(vals_f[live] - vals_c[live]) / vals_f[live]
            worst = max(worst, float(rel.max()))
    return 3.0 * worst


def closed_spectra(mesh, k, tol=1e-8, seed=42):
    """Certified spectra of the three Hodge Laplacian pencils."""
    return {p: solve_pair(hodge_laplacian(mesh, p), k=k, tol=tol, seed=seed)
            for p in (0, 1, 2)}


def audit_closed(mesh, j_max=20, tol_audit=AUDIT_TOL, allowance=0.0,
                 spectra=None, tol=1e-8, seed=42):
    """Run the full closed-surface catalog; returns (records, spectra).

    ``spectra`` may carry precomputed results keyed by degree (each with
    at least j_max + 2 eigenvalues); otherwise the three pencils are
    solved here.
    """
    if not mesh.is_closed:
        raise AuditError("closed-surface audit needs a closed mesh")
    if j_max < 1:
        raise ValueError(f"j_max must be positive, got {j_max}")
    k = j_max + M_DIM
    if spectra is None:
        spectra = closed_spectra(mesh, k, tol=tol, seed=seed)
    for p in (0, 1, 2):
        if len(spectra[p].eigenvalues) < k:
            raise AuditError(f"need {k} eigenvalues for degree {p}, "
                             f"got {len(spectra[p].eigenvalues)}")

    curv = curvature_data(mesh)
    _, va, vol = surface_measures(mesh)
    int_h2 = float(va @ curv.H_norm2)
    int_mix = {p: float(va @ ((M_DIM - p) * curv.H_norm2 + (p - 1) * curv.h_norm2))
               for p in (0, 1, 2)}
    j_geom = {p: p / (M_DIM * (M_DIM - 1) * vol) * int_mix[p] for p in (0, 1, 2)}
    face_mass = whitney_face_mass(mesh)

    growth = 1.0 + 4.0 / M_DIM     # recursion ratio, = 3
    bump = 1.0 + M_DIM / 4.0       # gap prefactor, = 3/2
    records = []
    for p in (0, 1, 2):
        vals = spectra[p].eigenvalues
        vecs = spectra[p].eigenvectors
        scale = float(vals[k - 1])
        phi = phi_field(curv, p)
        common = {"vol": vol, "zero_count": spectra[p].zero_count}

        for j in range(1, j_max + 1):
            lam_j = float(vals[j - 1])
            gap_lhs = float(vals[j] + vals[j + 1])
            rho = reconstruct_density(mesh, p, vecs[:, j - 1], face_mass)
            int_h2_rho = integrate_against(mesh, rho, curv.H_norm2)
            int_phi_rho = integrate_against(mesh, rho, phi.values)

            if p in (0, 1):
                int_curv_rho = integrate_against(mesh, rho, curv.K) if p == 1 else 0.0
                delta1 = curv.inf_K if p == 1 else 0.0
                records.append(_record(
                    "gap-curvature-integral", p, j, gap_lhs,
                    4.0 * (bump * lam_j - int_curv_rho + 0.25 * int_h2_rho),
                    {**common, "lambda_j": lam_j, "curvature_term": int_curv_rho,
                     "h2_term": int_h2_rho, "density_factor": rho.factor},
                    tol_audit, allowance, scale))
                records.append(_record(
                    "gap-curvature-sup", p, j, gap_lhs,
                    4.0 * (bump * lam_j - delta1 + 0.25 * curv.sup_H2),
                    {**common, "lambda_j": lam_j, "inf_curvature": delta1,
                     "sup_h2": curv.sup_H2},
                    tol_audit, allowance, scale))

            records.append(_record(
                "gap-phi-integral", p, j, gap_lhs,
                4.0 * (bump * lam_j + int_phi_rho),
                {**common, "lambda_j": lam_j, "phi_term": int_phi_rho,
                 "density_factor": rho.factor},
                tol_audit, allowance, scale))
            records.append(_record(
                "gap-phi-sup", p, j, gap_lhs,
                4.0 * (bump * lam_j + phi.sup),
                {**common, "lambda_j": lam_j, "sup_phi": phi.sup},
                tol_audit, allowance, scale))

            ratio = growth ** (j - 1)
            records.append(_record(
                "recursion-basic", p, j, lam_j,
                ratio * j_geom[p] + (ratio - 1.0) * phi.sup,
                {**common, "geometric_term": j_geom[p], "sup_phi": phi.sup},
                tol_audit, allowance, scale))
            records.append(_record(
                "recursion-sharp", p, j, float(vals[j + 1]),
                4.0 * (bump * ratio * j_geom[p] + (bump * ratio - M_DIM / 4.0) * phi.sup),
                {**common, "geometric_term": j_geom[p], "sup_phi": phi.sup},
                tol_audit, allowance, scale))

        records.append(_record(
            "gap-phi-first", p, 1, float(vals[1] + vals[2]),
            4.0 * (bump * j_geom[p] + phi.sup),
            {**common, "geometric_term": j_geom[p], "sup_phi": phi.sup},
            tol_audit, allowance, scale))

        if p == 1:
            records.append(_record(
                "asada", 1, 1, float(vals[0]), j_geom[1],
                {**common, "geometric_term": j_geom[1]},
                tol_audit, allowance, scale))
        if p == 0:
            records.append(_record(
                "reilly", 0, 2, float(vals[1]), int_h2 / (M_DIM * vol),
                {**common, "int_h2": int_h2},
                tol_audit, allowance, scale))
            records.append(_record(
                "reilly-sum", 0, 1, float(vals[1] + vals[2]), int_h2 / vol,
                {**common, "int_h2": int_h2},
                tol_audit, allowance, scale))

    return _sort_records(records), spectra


def audit_dirichlet(mesh, potential=None, ambient="flat", j_max=15,
                    tol_audit=AUDIT_TOL, allowance=0.0, spectrum=None,
                    tol=1e-8, seed=42):
    """Run the Dirichlet-with-potential catalog; returns (records, spectrum).

    ``ambient`` is "flat" for domains immersed in a plane (enables the
    flat zero-potential chain) or "sphere" for domains in a unit round
    sphere (enables the symmetric-space form).
    """
    if ambient not in ("flat", "sphere"):
        raise ValueError(f'ambient must be "flat" or "sphere", got {ambient!r}')
    if j_max < 1:
        raise ValueError(f"j_max must be positive, got {j_max}")
    pair = dirichlet_laplacian(mesh, potential)
    k = j_max + M_DIM
    if spectrum is None:
        spectrum = solve_pair(pair, k=k, tol=tol, seed=seed)
    if len(spectrum.eigenvalues) < k:
        raise AuditError(f"need {k} eigenvalues, got {len(spectrum.eigenvalues)}")

    interior = pair.interior_index_map
    q = np.zeros(mesh.num_vertices) if potential is None else \
        np.asarray(potential, dtype=float)
    q_int = q[interior]
    zero_potential = not q.any()
    curv = curvature_data(mesh)
    h2_int = curv.H_norm2[interior]
    weights = pair.mass_diag
    sup_field = float(np.abs(h2_int - 4.0 * q_int).max())

    vals = spectrum.eigenvalues
    vecs = spectrum.eigenvectors
    scale = float(vals[k - 1])
    records = []
    common = {"zero_count": spectrum.zero_count}
    for j in range(1, j_max + 1):
        lam_j = float(vals[j - 1])
        gap_lhs = float(vals[j] + vals[j + 1])
        raw = vecs[:, j - 1] ** 2
        factor = float(weights @ raw)
        lo, hi = DENSITY_FACTOR_RANGE
        if not (lo <= factor <= hi):
            raise AuditError(f"Dirichlet density factor {factor:.6f} outside [{lo}, {hi}]")
        rho = raw / factor
        int_term = float(weights @ (rho * (0.25 * h2_int - q_int)))

        records.append(_record(
            "dirichlet-potential-integral", 0, j, gap_lhs,
            4.0 * ((1.0 + M_DIM / 4.0) * lam_j + int_term),
            {**common, "lambda_j": lam_j, "potential_term": int_term,
             "density_factor": factor},
            tol_audit, allowance, scale))
        records.append(_record(
            "dirichlet-potential-sup", 0, j, gap_lhs,
            (4.0 + M_DIM) * lam_j + sup_field,
            {**common, "lambda_j": lam_j, "sup_field": sup_field},
            tol_audit, allowance, scale))
        if ambient == "sphere":
            intrinsic = np.maximum(h2_int - 4.0, 0.0)
            rss_sup = float(np.abs(intrinsic + 4.0 - 4.0 * q_int).max())
            records.append(_record(
                "dirichlet-symmetric-space", 0, j, gap_lhs,
                (4.0 + M_DIM) * lam_j + rss_sup,
                {**common, "lambda_j": lam_j, "sup_field": rss_sup,
                 "curvature_shift": 4.0},
                tol_audit, allowance, scale))
        if ambient == "flat" and zero_potential:
            records.append(_record(
                "levitin-parnovski", 0, j, gap_lhs, (4.0 + M_DIM) * lam_j,
                {**common, "lambda_j": lam_j},
                tol_audit, allowance, scale))

    if zero_potential:
        records.append(_record(
            "payne-polya-weinberger", 0, 1, float(vals[1]),
            (1.0 + 4.0 / M_DIM) * float(vals[0]),
            {**common, "lambda_1": float(vals[0])},
            tol_audit, allowance, scale))
        for j in range(1, j_max + 1):
            records.append(_record(
                "hile-protter", 0, j, float(vals[j]),
                (1.0 + 4.0 / M_DIM) * float(np.mean(vals[:j])),
                {**common, "mean_below": float(np.mean(vals[:j]))},
                tol_audit, allowance, scale))
            gaps = float(vals[j]) - vals[:j]
            records.append(_record(
                "yang", 0, j, float(np.sum(gaps ** 2)),
                4.0 / M_DIM * float(np.sum(gaps * vals[:j])),
                {**common, "lambda_next": float(vals[j])},
                tol_audit, allowance, scale))

    return _sort_records(records), spectrum


# -- reports ---------------------------------------------------------------


def emit_report(records, mesh_name, refinement, spectra=None, path=None, fmt="json"):
    """Serialize audit records deterministically; returns the text.

    JSON layout: {"mesh", "refinement", "records", "spectra"?} with the
    records ordered by (ineq, p, j).  CSV flattens one record per row
    with the terms as a JSON column.  Non-finite values are refused.
    """
    if fmt not in ("json", "csv"):
        raise ValueError(f'fmt must be "json" or "csv", got {fmt!r}')
    records = _sort_records([dict(r) for r in records])
    for rec in records:
        for key in ("lhs", "rhs", "slack"):
            _finite(rec[key], f'{rec["ineq"]} {key}')
        for key, val in rec["terms"].items():
            if isinstance(val, float):
                _finite(val, f'{rec["ineq"]} term {key}')

    if fmt == "json":
        payload = {"mesh": mesh_name, "refinement": int(refinement),
                   "records": records}
        if spectra is not None:
            if hasattr(spectra, "to_json_dict"):
                spectra = {0: spectra}
            payload["spectra"] = {str(p): s.to_json_dict(p)
                                  for p, s in sorted(spectra.items())}
        text = json.dumps(payload, indent=2, sort_keys=True) + "\n"
    else:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["mesh", "refinement", "ineq", "p", "j",
                         "lhs", "rhs", "slack", "pass", "terms"])
        for rec in records:
            writer.writerow([
                mesh_name, refinement, rec["ineq"],
                "" if rec["p"] is None else rec["p"], rec["j"],
                repr(rec["lhs"]), repr(rec["rhs"]), repr(rec["slack"]),
                str(rec["pass"]).lower(),
                json.dumps(rec["terms"], sort_keys=True),
            ])
        text = buf.getvalue()

    if path is not None:
        with open(path, "w") as fh:
            fh.write(text)
    return text
