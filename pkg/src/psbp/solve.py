"""Inverse shading: recover normals or log-depth gradients from image triplets.

Four per-pixel solvers are provided:

* woodham_normals          -- linear orthographic Lambertian solve
* lambertian_pps_closed_form -- algebraic perspective Lambertian solve for
                                log-depth gradients and diffuse albedo
* blinn_phong_ortho_solve  -- damped least squares over (n1, n2) under the
                              orthographic Blinn-Phong model
* blinn_phong_pps_solve    -- damped least squares over the log-depth
                              gradient under the perspective Blinn-Phong
                              model, using cross-multiplied intensity ratios

plus conditioning diagnostics for three-light rigs.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import (
    CameraIntrinsics,
    GradientField,
    Image,
    KIND_LOG_DEPTH,
    LightSource,
    Material,
    NormalField,
    input_mask,
)
from .geometry import ImagePoint, halfway_vector_grid, pixel_grid
from .optim import LMConfig, levenberg_marquardt_batch

SINGULAR_DET_THRESHOLD = 1e-12
INDICATOR_THRESHOLD = 1e-12

_RATIO_PAIRS = ((0, 1), (1, 2), (0, 2))


@dataclass
class AlbedoMap:
    """Per-pixel diffuse albedo estimate."""

    values: np.ndarray
    mask: np.ndarray


@dataclass
class ClosedFormTerms:
    """Per-pixel linear-system terms of the perspective Lambertian solve:
    m1*gx + m2*gy = h1 and m3*gx + m4*gy = h2, plus the scaled intensities
    r_i the system is built from."""

    m1: np.ndarray
    m2: np.ndarray
    m3: np.ndarray
    m4: np.ndarray
    h1: np.ndarray
    h2: np.ndarray
    r1: np.ndarray
    r2: np.ndarray
    r3: np.ndarray


@dataclass
class RatioTerms:
    """Diagnostic quantities of one intensity-ratio equation between lights
    M and N at an image point: the light-vs-view difference vectors Q (for
    M) and T (for N) and the scalars e, k pairing gamma*p - f*||L|| for M
    and N respectively."""

    Q: np.ndarray
    T: np.ndarray
    k: float
    e: float


@dataclass
class ConditioningReport:
    """Light-rig conditioning diagnostics over a pixel grid.

    flags[i] marks pixels where indicator expression i (0-based) is below
    threshold; expressions 0-2 depend only on the rig and are broadcast.
    det_proxy is |det M| of the closed-form system evaluated with unit test
    intensities.
    """

    flags: np.ndarray
    expressions: np.ndarray
    non_coplanar: bool
    det_proxy: np.ndarray
    threshold: float

    def flagged_counts(self):
        return [int(f.sum()) for f in self.flags]


def _image_stack(images):
    grids = [img.data if isinstance(img, Image) else np.asarray(img, float) for img in images]
    if len(grids) != 3:
        raise ValueError("exactly 3 input images are required")
    shape = grids[0].shape
    for g in grids:
        if g.shape != shape:
            raise ValueError("input images must share one shape")
    return grids


def _light_arrays(lights):
    if len(lights) != 3:
        raise ValueError("exactly 3 lights are required")
    dirs = np.stack([li.direction for li in lights])
    norms = np.array([li.norm for li in lights])
    ld = np.array([li.diffuse_intensity for li in lights])
    ls = np.array([li.specular_intensity for li in lights])
    return dirs, norms, ld, ls


def woodham_normals(images, lights, mask=None):
    """Classic three-light orthographic Lambertian solve.

    Solves L_hat @ (k_d * n_hat) = I / l_d per pixel; the solution's norm is
    the diffuse albedo and its direction the normal.  Near-zero solutions
    (shadowed or empty pixels) are masked out.
    """
    grids = _image_stack(images)
    dirs, norms, ld, ls = _light_arrays(lights)
    for li in lights:
        li.require_frontal()
    lmat = dirs / norms[:, None]
    det = np.linalg.det(lmat)
    if abs(det) < SINGULAR_DET_THRESHOLD:
        raise ValueError("light directions are coplanar: singular light matrix")
    if np.any(ld <= 0):
        raise ValueError("diffuse light intensities must be positive")
    if mask is None:
        mask = input_mask(grids)
    rhs = np.stack([g / l for g, l in zip(grids, ld)], axis=-1)
    b = rhs @ np.linalg.inv(lmat).T
    albedo = np.linalg.norm(b, axis=-1)
    ok = mask & (albedo > 1e-12)
    n = np.where(ok[..., None], b / np.where(ok, albedo, 1.0)[..., None], 0.0)
    n[~ok] = (0.0, 0.0, 1.0)
    ok &= n[..., 2] != 0.0
    normals = NormalField(n=n, mask=ok)
    return normals, AlbedoMap(values=np.where(ok, albedo, 0.0), mask=ok.copy())


def _closed_form_system(grids, lights, X, Y, focal_length):
    dirs, norms, ld, _ = _light_arrays(lights)
    f = focal_length
    alpha, beta, gamma = dirs[:, 0], dirs[:, 1], dirs[:, 2]
    # Per-light linear coefficients of the shading numerator.
    a = [f * alpha[k] + X * gamma[k] for k in range(3)]
    b = [f * beta[k] + Y * gamma[k] for k in range(3)]
    r = [grids[k] * norms[k] / ld[k] for k in range(3)]
    terms = ClosedFormTerms(
        m1=r[1] * a[0] - r[0] * a[1],
        m2=r[1] * b[0] - r[0] * b[1],
        m3=r[2] * a[0] - r[0] * a[2],
        m4=r[2] * b[0] - r[0] * b[2],
        h1=-r[1] * gamma[0] + r[0] * gamma[1],
        h2=-r[2] * gamma[0] + r[0] * gamma[2],
        r1=r[0],
        r2=r[1],
        r3=r[2],
    )
    return terms, a, b, gamma


def closed_form_terms(images, lights, intr: CameraIntrinsics, centerized=True) -> ClosedFormTerms:
    """Expose the per-pixel 2x2 system of the perspective Lambertian solve."""
    grids = _image_stack(images)
    X, Y = pixel_grid(grids[0].shape[1], grids[0].shape[0], intr, centerized)
    terms, _, _, _ = _closed_form_system(grids, lights, X, Y, intr.focal_length)
    return terms


def lambertian_pps_closed_form(
    images, lights, intr: CameraIntrinsics, centerized=True, mask=None
):
    """Algebraic perspective Lambertian solve.

    Cross-multiplying the shading equations of image pairs (1,2) and (1,3)
    eliminates albedo and the normal's length, leaving a 2x2 linear system
    per pixel for the log-depth gradient.  Pixels whose system determinant
    falls below 1e-12 are masked out, not clamped.  Returns the gradient
    field and the diffuse albedo recovered by back-substitution.
    """
    grids = _image_stack(images)
    dirs, norms, ld, _ = _light_arrays(lights)
    for li in lights:
        li.require_frontal()
    h, w = grids[0].shape
    if mask is None:
        mask = input_mask(grids)
    X, Y = pixel_grid(w, h, intr, centerized)
    f = intr.focal_length
    terms, a, b, gamma = _closed_form_system(grids, lights, X, Y, f)

    det = terms.m1 * terms.m4 - terms.m2 * terms.m3
    ok = mask & (np.abs(det) >= SINGULAR_DET_THRESHOLD)
    safe = np.where(ok, det, 1.0)
    gx = np.where(ok, (terms.h1 * terms.m4 - terms.m2 * terms.h2) / safe, 0.0)
    gy = np.where(ok, (terms.m1 * terms.h2 - terms.h1 * terms.m3) / safe, 0.0)
    grad = GradientField(gx=gx, gy=gy, kind=KIND_LOG_DEPTH, mask=ok)

    wterm = X * gx + Y * gy + 1.0
    nn = np.sqrt((f * gx) ** 2 + (f * gy) ** 2 + wterm * wterm)
    denom = ld[0] * (a[0] * gx + b[0] * gy + gamma[0])
    ok_alb = ok & (np.abs(denom) > 1e-12)
    albedo = np.where(ok_alb, grids[0] * norms[0] * nn / np.where(ok_alb, denom, 1.0), 0.0)
    return grad, AlbedoMap(values=albedo, mask=ok_alb)


def sensitivity_indicator(
    lights, width, height, intr: CameraIntrinsics, centerized=True,
    threshold=INDICATOR_THRESHOLD,
) -> ConditioningReport:
    """Evaluate the 11 degeneracy expressions of the closed-form solve.

    Each expression is a product combination of light components (and, for
    expressions 4-11, the pixel coordinates) whose vanishing can make the
    per-pixel system singular; |expression| < threshold raises a flag.  The
    report also carries a global non-coplanarity check of the rig and the
    per-pixel |det| of the system evaluated at unit test intensities.
    """
    dirs, norms, ld, _ = _light_arrays(lights)
    X, Y = pixel_grid(width, height, intr, centerized)
    (a1, b1, g1), (a2, b2, g2), (a3, b3, g3) = dirs

    ones = np.ones_like(X)
    exprs = np.stack(
        [
            (b1 * a3 - a1 * b3) * ones,
            (b2 * a1 - a2 * b1) * ones,
            (a2 * b3 - b2 * a3) * ones,
            Y * a1 * g1 - X * b1 * g1,
            X * b2 * g1 - Y * a2 * g1,
            Y * a2 * g3 - X * b2 * g3,
            X * g1 * b1 - Y * g1 * a1,
            Y * g1 * a3 - X * g1 * b3,
            Y * g2 * a1 - X * g2 * b1,
            Y * a2 * g1 - X * b2 * g1,
            X * g2 * b3 - Y * g2 * a3,
        ]
    )
    flags = np.abs(exprs) < threshold

    unit = dirs / norms[:, None]
    non_coplanar = bool(abs(np.linalg.det(unit)) >= SINGULAR_DET_THRESHOLD)

    # det of the closed-form system at unit test intensities (I_k = 1).
    r = norms
    f = intr.focal_length
    a = [f * dirs[k, 0] + X * dirs[k, 2] for k in range(3)]
    b = [f * dirs[k, 1] + Y * dirs[k, 2] for k in range(3)]
    m1 = r[1] * a[0] - r[0] * a[1]
    m2 = r[1] * b[0] - r[0] * b[1]
    m3 = r[2] * a[0] - r[0] * a[2]
    m4 = r[2] * b[0] - r[0] * b[2]
    det_proxy = np.abs(m1 * m4 - m2 * m3)

    return ConditioningReport(
        flags=flags,
        expressions=exprs,
        non_coplanar=non_coplanar,
        det_proxy=det_proxy,
        threshold=threshold,
    )


def ratio_terms(point: ImagePoint, light_m: LightSource, light_n: LightSource,
                intr: CameraIntrinsics) -> RatioTerms:
    """Diagnostic terms of the intensity-ratio equation for a light pair."""
    f = intr.focal_length
    p = float(np.linalg.norm([point.x, point.y, f]))
    pix = np.array([point.x, point.y, f])
    q = light_m.direction - light_m.norm * pix
    t = light_n.direction - light_n.norm * pix
    return RatioTerms(
        Q=q,
        T=t,
        k=float(light_n.direction[2] * p - f * light_n.norm),
        e=float(light_m.direction[2] * p - f * light_m.norm),
    )


class _PerspectiveRatioModel:
    """Batched residuals/Jacobian of the cross-multiplied perspective
    Blinn-Phong ratio equations over a set of pixels."""

    def __init__(self, x, y, intensities, lights, material: Material, focal_length):
        dirs, norms, ld, ls = _light_arrays(lights)
        f = float(focal_length)
        self.f = f
        self.x = np.asarray(x, dtype=np.float64)
        self.y = np.asarray(y, dtype=np.float64)
        self.I = np.asarray(intensities, dtype=np.float64)
        self.gamma = dirs[:, 2]
        self.A = f * dirs[:, 0][None, :] + self.x[:, None] * self.gamma[None, :]
        self.B = f * dirs[:, 1][None, :] + self.y[:, None] * self.gamma[None, :]
        hh = np.stack(
            [halfway_vector_grid(self.x, self.y, f, li) for li in lights], axis=1
        )  # (n, light, 3)
        self.hx_lin = hh[..., 0] * f + hh[..., 2] * self.x[:, None]
        self.hy_lin = hh[..., 1] * f + hh[..., 2] * self.y[:, None]
        self.h0 = hh[..., 2]
        self.cd = material.k_d * ld / norms
        self.cs = material.k_s * ls
        self.shiny = material.shininess

    def _shade(self, nu, idx):
        gx = nu[:, 0][:, None]
        gy = nu[:, 1][:, None]
        x = self.x[idx][:, None]
        y = self.y[idx][:, None]
        f = self.f
        w = 1.0 + x * gx + y * gy
        nn = np.sqrt((f * gx) ** 2 + (f * gy) ** 2 + w * w)
        num = self.A[idx] * gx + self.B[idx] * gy + self.gamma[None, :]
        u = (self.hx_lin[idx] * gx + self.hy_lin[idx] * gy + self.h0[idx]) / nn
        up = np.maximum(u, 0.0)
        shade = self.cd[None, :] * num / nn + self.cs[None, :] * up ** self.shiny
        return shade, num, u, up, w, nn, x, y

    def _combine(self, per_light, idx):
        i = self.I[idx]
        out = [
            i[:, m] * per_light[:, n] - i[:, n] * per_light[:, m]
            for m, n in _RATIO_PAIRS
        ]
        return np.stack(out, axis=1)

    def _shade_derivatives(self, nu, idx):
        shade, num, u, up, w, nn, x, y = self._shade(nu, idx)
        f = self.f
        gx = nu[:, 0][:, None]
        gy = nu[:, 1][:, None]
        dn_dx = (f * f * gx + w * x) / nn
        dn_dy = (f * f * gy + w * y) / nn
        lobe = np.where(u > 0.0, self.shiny * up ** (self.shiny - 1.0), 0.0)
        dshade = []
        for dnum, hlin, dnn in (
            (self.A[idx], self.hx_lin[idx], dn_dx),
            (self.B[idx], self.hy_lin[idx], dn_dy),
        ):
            ddiff = self.cd[None, :] * (dnum - num * dnn / nn) / nn
            dspec = self.cs[None, :] * lobe * (hlin - u * dnn) / nn
            dshade.append(ddiff + dspec)
        return shade, dshade

    def residuals(self, nu, idx):
        shade = self._shade(nu, idx)[0]
        return self._combine(shade, idx)

    def jacobian(self, nu, idx):
        _, dshade = self._shade_derivatives(nu, idx)
        cols = [self._combine(d, idx) for d in dshade]
        return np.stack(cols, axis=2)

    def absolute_residuals(self, nu, idx):
        """Direct shading mismatch I_k - R_k; zero only at the physical root."""
        return self.I[idx] - self._shade(nu, idx)[0]

    def absolute_jacobian(self, nu, idx):
        _, dshade = self._shade_derivatives(nu, idx)
        return np.stack([-d for d in dshade], axis=2)


def blinn_phong_residuals(gx, gy, point: ImagePoint, intensities, lights,
                          material: Material, intr: CameraIntrinsics):
    """Ratio residuals of one pixel at a log-depth gradient hypothesis.

    For image pairs (1,2), (2,3), (1,3) returns
    I_M * shade_N(gx, gy) - I_N * shade_M(gx, gy), which vanish exactly when
    the gradient reproduces all three intensities under the perspective
    Blinn-Phong model.
    """
    model = _PerspectiveRatioModel(
        np.array([point.x]), np.array([point.y]),
        np.asarray(intensities, dtype=np.float64).reshape(1, 3),
        lights, material, intr.focal_length,
    )
    return model.residuals(np.array([[gx, gy]]), np.array([0]))[0]


def blinn_phong_residual_jacobian(gx, gy, point: ImagePoint, intensities, lights,
                                  material: Material, intr: CameraIntrinsics):
    """Analytic Jacobian of blinn_phong_residuals w.r.t. (gx, gy); (3, 2)."""
    model = _PerspectiveRatioModel(
        np.array([point.x]), np.array([point.y]),
        np.asarray(intensities, dtype=np.float64).reshape(1, 3),
        lights, material, intr.focal_length,
    )
    return model.jacobian(np.array([[gx, gy]]), np.array([0]))[0]


def _subset_calls(fn, sub):
    if sub is None:
        return fn
    return lambda nu, idx: fn(nu, sub[idx])


def _ratio_attempt(model, x0, cfg, sub=None):
    """One solve attempt: LM on the ratio residuals, then an absolute-residual
    polish started at the ratio root.

    The cross-multiplied ratio system is rank-2 (the third equation is a
    combination of the other two) and can admit several exact roots; only
    the physical one also zeroes the absolute residuals, so the polish both
    refines the root and scores the attempt.  Returns (x, absolute residual
    norm, ok).
    """
    res = _subset_calls(model.residuals, sub)
    jac = _subset_calls(model.jacobian, sub)
    ares = _subset_calls(model.absolute_residuals, sub)
    ajac = _subset_calls(model.absolute_jacobian, sub)

    xr, _, conv, fail = levenberg_marquardt_batch(res, jac, x0, cfg)
    ok = conv & ~fail
    xp, ap, conv_p, fail_p = levenberg_marquardt_batch(ares, ajac, xr, cfg)
    fr = ares(xr, np.arange(xr.shape[0]))
    ar = np.linalg.norm(fr, axis=1)
    improved = conv_p & ~fail_p & (ap <= ar)
    x = np.where(improved[:, None], xp, xr)
    a = np.where(improved, ap, ar)
    ok = ok | improved
    return x, a, ok


def blinn_phong_pps_solve(
    images, lights, material: Material, intr: CameraIntrinsics,
    lm_config: LMConfig | None = None, centerized=True, mask=None,
    accept_tol=1e-3,
) -> GradientField:
    """Per-pixel perspective Blinn-Phong solve for the log-depth gradient.

    Damped least squares on the intensity-ratio residuals, started from the
    Lambertian closed-form estimate (exact wherever the specular lobe is
    negligible; zero at pixels the closed form masks).  Because the ratio
    system can have non-physical extra roots, every root is polished and
    scored on the absolute shading residuals; pixels whose best root keeps
    an absolute residual norm above accept_tol — or that never converge —
    are masked out.  A second attempt from a zero start rescues pixels the
    first start sends to a wrong root.
    """
    grids = _image_stack(images)
    for li in lights:
        li.require_frontal()
    h, w = grids[0].shape
    if mask is None:
        mask = input_mask(grids)
    if not mask.any():
        return GradientField(
            gx=np.zeros((h, w)), gy=np.zeros((h, w)), kind=KIND_LOG_DEPTH,
            mask=np.zeros((h, w), dtype=bool),
        )

    init_grad, _ = lambertian_pps_closed_form(grids, lights, intr, centerized, mask=mask)

    X, Y = pixel_grid(w, h, intr, centerized)
    rows, cols = np.nonzero(mask)
    intensities = np.stack([g[rows, cols] for g in grids], axis=1)
    model = _PerspectiveRatioModel(
        X[rows, cols], Y[rows, cols], intensities, lights, material, intr.focal_length
    )
    cfg = lm_config or LMConfig()

    x0 = np.stack([init_grad.gx[rows, cols], init_grad.gy[rows, cols]], axis=1)
    x, a, ok = _ratio_attempt(model, x0, cfg)

    retry = (~ok | (a > accept_tol)) & (np.abs(x0) > 0).any(axis=1)
    if retry.any():
        sub = np.nonzero(retry)[0]
        x2, a2, ok2 = _ratio_attempt(model, np.zeros((sub.size, 2)), cfg, sub=sub)
        better = (ok2 & ~ok[sub]) | (ok2 & (a2 < a[sub]))
        x[sub[better]] = x2[better]
        a[sub[better]] = a2[better]
        ok[sub[better]] = True

    good = ok & (a <= accept_tol)
    gx = np.zeros((h, w))
    gy = np.zeros((h, w))
    valid = np.zeros((h, w), dtype=bool)
    gx[rows, cols] = np.where(good, x[:, 0], 0.0)
    gy[rows, cols] = np.where(good, x[:, 1], 0.0)
    valid[rows, cols] = good
    return GradientField(gx=gx, gy=gy, kind=KIND_LOG_DEPTH, mask=valid)


class _OrthoModel:
    """Batched residuals/Jacobian of the orthographic Blinn-Phong fit over
    the first two normal components."""

    def __init__(self, intensities, lights, material: Material):
        dirs, norms, ld, ls = _light_arrays(lights)
        self.I = np.asarray(intensities, dtype=np.float64)
        self.lhat = dirs / norms[:, None]
        hh = self.lhat + np.array([0.0, 0.0, 1.0])
        hn = np.linalg.norm(hh, axis=1)
        if np.any(hn < 1e-12):
            raise ValueError("degenerate halfway vector: light opposes the view direction")
        self.hhat = hh / hn[:, None]
        self.cd = material.k_d * ld
        self.cs = material.k_s * ls
        self.shiny = material.shininess

    @staticmethod
    def _n3(n12):
        return np.sqrt(np.maximum(1.0 - n12[:, 0] ** 2 - n12[:, 1] ** 2, 1e-12))

    def _dots(self, n12):
        n3 = self._n3(n12)
        n = np.stack([n12[:, 0], n12[:, 1], n3], axis=1)
        return n @ self.lhat.T, n @ self.hhat.T, n3

    def residuals(self, n12, idx):
        u, v, _ = self._dots(n12)
        shade = self.cd[None, :] * np.maximum(u, 0.0) \
            + self.cs[None, :] * np.maximum(v, 0.0) ** self.shiny
        return self.I[idx] - shade

    def jacobian(self, n12, idx):
        u, v, n3 = self._dots(n12)
        vp = np.maximum(v, 0.0)
        lobe = np.where(v > 0.0, self.shiny * vp ** (self.shiny - 1.0), 0.0)
        gate = (u > 0.0).astype(np.float64)
        cols = []
        for comp in (0, 1):
            slope = -n12[:, comp] / n3
            du = self.lhat[None, :, comp] + self.lhat[None, :, 2] * slope[:, None]
            dv = self.hhat[None, :, comp] + self.hhat[None, :, 2] * slope[:, None]
            cols.append(-(self.cd[None, :] * gate * du + self.cs[None, :] * lobe * dv))
        return np.stack(cols, axis=2)

    @staticmethod
    def project(n12):
        r = np.linalg.norm(n12, axis=1)
        limit = 1.0 - 1e-6
        scale = np.where(r > limit, limit / np.maximum(r, 1e-300), 1.0)
        return n12 * scale[:, None]


def blinn_phong_ortho_solve(
    images, lights, material: Material, lm_config: LMConfig | None = None, mask=None
) -> NormalField:
    """Per-pixel orthographic Blinn-Phong fit of the surface normal.

    The normal is parameterized by (n1, n2) with n3 = +sqrt(1 - n1^2 - n2^2);
    trial steps leaving the unit disk are projected back to radius 1 - 1e-6.
    Initialization comes from the linear Lambertian solve.
    """
    grids = _image_stack(images)
    for li in lights:
        li.require_frontal()
    h, w = grids[0].shape
    if mask is None:
        mask = input_mask(grids)
    empty = NormalField(
        n=np.broadcast_to(np.array([0.0, 0.0, 1.0]), (h, w, 3)).copy(),
        mask=np.zeros((h, w), dtype=bool),
    )
    if not mask.any():
        return empty

    init_normals, _ = woodham_normals(grids, lights, mask=mask)
    rows, cols = np.nonzero(mask)
    intensities = np.stack([g[rows, cols] for g in grids], axis=1)
    model = _OrthoModel(intensities, lights, material)
    x0 = model.project(
        np.stack([init_normals.n[rows, cols, 0], init_normals.n[rows, cols, 1]], axis=1)
    )
    cfg = lm_config or LMConfig()
    xr, rnorm, conv, fail = levenberg_marquardt_batch(
        model.residuals, model.jacobian, x0, cfg, project=model.project
    )
    good = conv & ~fail

    n = np.zeros((h, w, 3))
    n[..., 2] = 1.0
    n3 = model._n3(xr)
    n[rows, cols, 0] = np.where(good, xr[:, 0], 0.0)
    n[rows, cols, 1] = np.where(good, xr[:, 1], 0.0)
    n[rows, cols, 2] = np.where(good, n3, 1.0)
    ok = np.zeros((h, w), dtype=bool)
    ok[rows, cols] = good
    return NormalField(n=n, mask=ok)
