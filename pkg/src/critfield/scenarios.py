"""Built-in scenarios and the scenario JSON format.

Shorthand names accepted by :func:`get_scenario`::

    circle:r  ellipse:a,b  sphere:r  ellipsoid:a,b,c  torus:R,r
    paper_cubic  paper_cubic_perturbed:a

Closed curves are single periodic charts.  Spheres and ellipsoids use six
overlapping cube-face charts.  ``paper_cubic`` is the union of the graphs
of ``1 + x^3`` and ``-(1 + x^3)`` on ``|x| <= 0.3``.  Outside that window the
half-width is blended C^2 into straight lines (slope 0.5 on the right, 0.2
on the left, gentle enough that ``(0, +-1)`` stay the nearest points to the
origin) and closed by two polar caps: a circle on the narrow left end, a
slightly flattened circle on the wide right end.  The blend parameters are
recorded in ``metadata``.
"""
from __future__ import annotations

import json
import math
from pathlib import Path

import numpy as np
from numpy.polynomial import Polynomial

from .manifold import Chart, Scenario, locate, tangent_normal_frames


# -- C^2 (quintic) smoothstep -------------------------------------------------

def smoothstep(t):
    """Quintic smoothstep with value, first and second derivative."""
    t = np.clip(t, 0.0, 1.0)
    s = t**3 * (10 - 15 * t + 6 * t**2)
    ds = 30 * t**2 * (1 - t) ** 2
    d2s = 60 * t * (1 - t) * (1 - 2 * t)
    return s, ds, d2s


def plateau(x, inner, outer):
    """Even C^2 cutoff: 1 on ``|x| <= inner``, 0 on ``|x| >= outer``."""
    ax = np.abs(x)
    L = outer - inner
    s, ds, d2s = smoothstep((ax - inner) / L)
    sgn = np.sign(x)
    return 1 - s, -sgn * ds / L, -d2s / L**2


# -- simple closed curves and surfaces --------------------------------------------

def _curve_chart(fx, period=2 * np.pi):
    """Periodic curve chart from a function returning (pts, d1, d2) for a 1-D array t."""
    def f(U):
        return fx(U[:, 0])[0]

    def df(U):
        return fx(U[:, 0])[1][:, :, None]

    def d2f(U):
        return fx(U[:, 0])[2][:, :, None, None]

    return Chart(1, 2, [0.0], [period], (True,), f, df, d2f)


def ellipse(a: float = 2.0, b: float = 1.0) -> Scenario:
    a, b = float(a), float(b)

    def fx(t):
        c, s = np.cos(t), np.sin(t)
        p = np.stack([a * c, b * s], 1)
        d1 = np.stack([-a * s, b * c], 1)
        return p, d1, -p

    lo, hi = min(a, b), max(a, b)
    return Scenario(f"ellipse:{a:g},{b:g}", [_curve_chart(fx)], 1, 2, reach=lo**2 / hi, diameter=2 * hi,
                    metadata={"expected_critical_count": 1 if a != b else None})


def circle(r: float = 1.0) -> Scenario:
    sc = ellipse(r, r)
    sc.name = f"circle:{float(r):g}"
    sc.metadata = {}
    return sc


_FACES = [(0, 1), (0, -1), (1, 1), (1, -1), (2, 1), (2, -1)]


def _face_chart(axis, sign, scale, half=1.1):
    scale = np.asarray(scale, float)
    others = [k for k in range(3) if k != axis]
    E = np.zeros((3, 2))
    E[others[0], 0] = 1.0
    E[others[1], 1] = 1.0
    base = np.zeros(3)
    base[axis] = sign

    def nvec(U):
        return base + U @ E.T

    def f(U):
        n = nvec(U)
        return scale * n / np.linalg.norm(n, axis=1, keepdims=True)

    def df(U):
        n = nvec(U)
        rho = np.linalg.norm(n, axis=1)
        g = n / rho[:, None]
        P = np.eye(3)[None] - g[:, :, None] * g[:, None, :]
        J = np.einsum("nij,jk->nik", P, E) / rho[:, None, None]
        return scale[None, :, None] * J

    def d2f(U):
        n = nvec(U)
        rho = np.linalg.norm(n, axis=1)
        ne = n @ E  # (N, 2) = n . e_i
        ee = E.T @ E  # (2, 2)
        r3 = rho[:, None, None, None] ** 3
        r5 = rho[:, None, None, None] ** 5
        t1 = -(E[None, :, :, None] * ne[:, None, None, :] + E[None, :, None, :] * ne[:, None, :, None]) / r3
        t2 = -n[:, :, None, None] * ee[None, None] / r3
        t3 = 3 * n[:, :, None, None] * ne[:, None, :, None] * ne[:, None, None, :] / r5
        return scale[None, :, None, None] * (t1 + t2 + t3)

    return Chart(2, 3, [-half, -half], [half, half], (False, False), f, df, d2f,
                 sample_lo=[-1.0, -1.0], sample_hi=[1.0, 1.0])


def ellipsoid(a: float = 3.0, b: float = 2.0, c: float = 1.0) -> Scenario:
    axes = sorted([float(a), float(b), float(c)])
    charts = [_face_chart(ax, s, (a, b, c)) for ax, s in _FACES]
    return Scenario(f"ellipsoid:{float(a):g},{float(b):g},{float(c):g}", charts, 2, 3,
                    reach=axes[0] ** 2 / axes[2], diameter=2 * axes[2])


def sphere(r: float = 1.0) -> Scenario:
    sc = ellipsoid(r, r, r)
    sc.name = f"sphere:{float(r):g}"
    return sc


def torus(R: float = 2.0, r: float = 0.5) -> Scenario:
    R, r = float(R), float(r)

    def f(U):
        u, v = U[:, 0], U[:, 1]
        w = R + r * np.cos(v)
        return np.stack([w * np.cos(u), w * np.sin(u), r * np.sin(v)], 1)

    def df(U):
        u, v = U[:, 0], U[:, 1]
        w = R + r * np.cos(v)
        du = np.stack([-w * np.sin(u), w * np.cos(u), 0 * u], 1)
        dv = np.stack([-r * np.sin(v) * np.cos(u), -r * np.sin(v) * np.sin(u), r * np.cos(v)], 1)
        return np.stack([du, dv], 2)

    def d2f(U):
        u, v = U[:, 0], U[:, 1]
        w = R + r * np.cos(v)
        uu = np.stack([-w * np.cos(u), -w * np.sin(u), 0 * u], 1)
        uv = np.stack([r * np.sin(v) * np.sin(u), -r * np.sin(v) * np.cos(u), 0 * u], 1)
        vv = np.stack([-r * np.cos(v) * np.cos(u), -r * np.cos(v) * np.sin(u), -r * np.sin(v)], 1)
        return np.stack([np.stack([uu, uv], 2), np.stack([uv, vv], 2)], 3)

    chart = Chart(2, 3, [0, 0], [2 * np.pi, 2 * np.pi], (True, True), f, df, d2f)
    return Scenario(f"torus:{R:g},{r:g}", [chart], 2, 3, reach=min(r, R - r), diameter=2 * (R + r))


# -- the cubic example, compactified --------------------------------------------------

CUBIC = dict(window=0.3, blend_right=0.9, slope_right=0.5, blend_left=0.7, slope_left=0.2,
             tilt_cutoff=1.0, handover=1.05, right_center=3.5, left_center=-1.6,
             cap_blend=0.25, right_flatten=0.2)


def _ramp(w, w2, c):
    """Polynomial S on [w, w2] with S = w^3, S' = 3w^2 at w and S' = c, S'' = 0 at w2 (C^2)."""
    tau = Polynomial([-w / (w2 - w), 1 / (w2 - w)])
    phi = 1 - Polynomial([0, 0, 0, 10, -15, 6])(tau)
    dS = c + Polynomial([-c, 0, 3]) * phi
    mid = dS.integ(lbnd=w, k=w**3)
    return mid, float(mid(w2))


def _tilt_profile(w, w2):
    """Odd Psi with Psi(x) = x on |x| <= w, Psi' a C^2 plateau vanishing for |x| >= w2."""
    tau = Polynomial([-w / (w2 - w), 1 / (w2 - w)])
    psi = 1 - Polynomial([0, 0, 0, 10, -15, 6])(tau)
    mid = psi.integ(lbnd=w, k=w)
    return mid, float(mid(w2))


_RIGHT = _ramp(CUBIC["window"], CUBIC["blend_right"], CUBIC["slope_right"])
_LEFT = _ramp(CUBIC["window"], CUBIC["blend_left"], CUBIC["slope_left"])
_TILT = _tilt_profile(CUBIC["window"], CUBIC["tilt_cutoff"])


def _one_side(ax, w, w2, c, mid, end):
    d1, d2 = mid.deriv(1), mid.deriv(2)
    v = np.where(ax <= w, ax**3, np.where(ax <= w2, mid(ax), end + c * (ax - w2)))
    v1 = np.where(ax <= w, 3 * ax**2, np.where(ax <= w2, d1(ax), c))
    v2 = np.where(ax <= w, 6 * ax, np.where(ax <= w2, d2(ax), 0.0))
    return v, v1, v2


def _S(x):
    """S, S', S'' with S = x^3 on the window and linear tails of different slopes."""
    w = CUBIC["window"]
    x = np.asarray(x, float)
    ax = np.abs(x)
    r = _one_side(ax, w, CUBIC["blend_right"], CUBIC["slope_right"], *_RIGHT)
    l = _one_side(ax, w, CUBIC["blend_left"], CUBIC["slope_left"], *_LEFT)
    pos = x >= 0
    return (np.where(pos, r[0], -l[0]), np.where(pos, r[1], l[1]), np.where(pos, r[2], -l[2]))


def _Psi(x):
    w, w2 = CUBIC["window"], CUBIC["tilt_cutoff"]
    x = np.asarray(x, float)
    ax = np.abs(x)
    sg = np.where(x < 0, -1.0, 1.0)
    mid, end = _TILT
    v = np.where(ax <= w, ax, np.where(ax <= w2, mid(ax), end))
    v1 = np.where(ax <= w, 1.0, np.where(ax <= w2, mid.deriv(1)(ax), 0.0))
    v2 = np.where(ax <= w, 0.0, np.where(ax <= w2, mid.deriv(2)(ax), 0.0))
    return sg * v, v1, sg * v2


def _cubic_height(x, a=0.0):
    """Half-width g(x) = 1 + S(x) + a Psi(x) with first and second derivatives."""
    S, S1, S2 = _S(x)
    if not a:
        return 1 + S, S1, S2
    P, P1, P2 = _Psi(x)
    return 1 + S + a * P, S1 + a * P1, S2 + a * P2


def _graph_chart(sign, a, lo, hi, slo, shi):
    def f(U):
        x = U[:, 0]
        return np.stack([x, sign * _cubic_height(x, a)[0]], 1)

    def df(U):
        x = U[:, 0]
        return np.stack([np.ones_like(x), sign * _cubic_height(x, a)[1]], 1)[:, :, None]

    def d2f(U):
        x = U[:, 0]
        return np.stack([np.zeros_like(x), sign * _cubic_height(x, a)[2]], 1)[:, :, None, None]

    return Chart(1, 2, [lo], [hi], (False,), f, df, d2f, sample_lo=[slo], sample_hi=[shi])


def _cap_chart(side, a=0.0):
    """Polar cap around (X, 0): line ``|y| = g(X) + c (x - X)`` blended into a closing arc.

    Returns the chart plus the x-coordinates where its straight part begins
    and where it hands over to the graph charts.
    """
    from scipy.optimize import brentq

    c = CUBIC["slope_right"] if side > 0 else CUBIC["slope_left"]
    X = CUBIC["right_center"] if side > 0 else CUBIC["left_center"]
    gX = float(_cubic_height(np.array([X]), a)[0][0])
    rho = gX / math.sqrt(1 + c**2)
    delta, nu = CUBIC["cap_blend"], CUBIC["right_flatten"]
    # psi is the angle measured from the cap's axis direction (+x right, -x left)
    psi_t = math.pi / 2 + math.atan(c) if side > 0 else math.pi / 2 - math.atan(c)
    sigma = -1.0 if side > 0 else 1.0

    def radial(psi):
        ap = np.abs(psi)
        sg = np.where(psi < 0, -1.0, 1.0)
        den = np.sin(ap) + sigma * c * np.cos(ap)
        den1 = np.cos(ap) - sigma * c * np.sin(ap)
        den2 = -np.sin(ap) - sigma * c * np.cos(ap)
        safe = np.where(den > 1e-3, den, 1.0)
        rl = gX / safe
        rl1 = -gX * den1 / safe**2
        rl2 = gX * (2 * den1**2 / safe**3 - den2 / safe**2)
        if side > 0:
            cap = rho * (1 - nu * np.cos(psi) ** 2)
            cap1 = rho * nu * np.sin(2 * psi)
            cap2 = 2 * rho * nu * np.cos(2 * psi)
        else:
            cap, cap1, cap2 = rho + 0 * psi, 0 * psi, 0 * psi
        wgt, w1, w2 = smoothstep((ap - (psi_t - delta)) / (2 * delta))
        w1, w2 = sg * w1 / (2 * delta), w2 / (2 * delta) ** 2
        rl1 = sg * rl1
        r = wgt * rl + (1 - wgt) * cap
        r1 = w1 * (rl - cap) + wgt * rl1 + (1 - wgt) * cap1
        r2 = w2 * (rl - cap) + 2 * w1 * (rl1 - cap1) + wgt * rl2 + (1 - wgt) * cap2
        return r, r1, r2

    def angle(psi):
        return psi if side > 0 else psi + np.pi

    def parts(U):
        psi = U[:, 0]
        r, r1, r2 = radial(psi)
        th = angle(psi)
        e = np.stack([np.cos(th), np.sin(th)], 1)
        n = np.stack([-np.sin(th), np.cos(th)], 1)
        p = np.array([X, 0.0]) + r[:, None] * e
        d1 = r1[:, None] * e + r[:, None] * n
        d2 = r2[:, None] * e + 2 * r1[:, None] * n - r[:, None] * e
        return p, d1, d2

    def x_of(psi):
        return float(parts(np.array([[psi]]))[0][0, 0])

    # straight part starts at psi_t + delta; extend it up to |x| = handover
    psi_line = psi_t + delta
    x_line = x_of(psi_line)
    x_far = side * CUBIC["handover"]
    top = math.pi - 1e-3 if side > 0 else math.pi - math.atan(c) - 1e-3
    psi_max = brentq(lambda p: x_of(p) - x_far, psi_line, top)
    x_own = 0.5 * (x_line + x_far)
    psi_own = brentq(lambda p: x_of(p) - x_own, psi_line, psi_max)
    chart = Chart(1, 2, [-psi_max], [psi_max], (False,),
                  lambda U: parts(U)[0], lambda U: parts(U)[1][:, :, None], lambda U: parts(U)[2][:, :, None, None],
                  sample_lo=[-psi_own], sample_hi=[psi_own])
    return chart, x_line, x_own


def _cubic_scenario(a: float, name: str) -> Scenario:
    right, xr_line, xr_own = _cap_chart(+1, a)
    left, xl_line, xl_own = _cap_chart(-1, a)
    # graph charts stop inside the caps' straight parts, where both agree
    pad = 0.02 * (xl_own - xl_line)
    upper = _graph_chart(+1.0, a, xl_line + pad, xr_line - pad, xl_own, xr_own)
    lower = _graph_chart(-1.0, a, xl_line + pad, xr_line - pad, xl_own, xr_own)
    meta = dict(CUBIC, tilt=a, exact_window=[-CUBIC["window"], CUBIC["window"]])
    return Scenario(name, [upper, lower, right, left], 1, 2, reach=None, metadata=meta)


def paper_cubic() -> Scenario:
    sc = _cubic_scenario(0.0, "paper_cubic")
    sc.perturb_family = paper_cubic_perturbed
    return sc


def paper_cubic_perturbed(a: float = 0.1) -> Scenario:
    """Graphs of ``+-(1 + a x + x^3)`` on the window; the tilt levels off by |x| = 1."""
    return _cubic_scenario(float(a), f"paper_cubic_perturbed:{float(a):g}")


# -- ambient bump perturbations --------------------------------------------------------

def _bump_map(center, radius, direction, amplitude):
    center = np.asarray(center, float)
    v = np.asarray(direction, float)
    v = v / np.linalg.norm(v)

    def apply(P, J, H):
        d = P - center
        q = (d**2).sum(1) / radius**2
        inside = q < 1
        om = np.where(inside, 1 - q, 0.0)
        beta = om**3
        grad = (-6 * om**2 / radius**2)[:, None] * d  # d beta / dx
        hess = (24 * om / radius**4)[:, None, None] * d[:, :, None] * d[:, None, :] \
            - (6 * om**2 / radius**2)[:, None, None] * np.eye(P.shape[1])[None]
        Pn = P + amplitude * beta[:, None] * v
        # D Phi = I + a v grad^T ; D^2 Phi[k] = a v_k hess
        gJ = np.einsum("nd,ndi->ni", grad, J)
        Jn = J + amplitude * v[None, :, None] * gJ[:, None, :]
        Hn = H + amplitude * v[None, :, None, None] * (
            np.einsum("nd,ndij->nij", grad, H) + np.einsum("nde,ndi,nej->nij", hess, J, J)
        )[:, None]
        return Pn, Jn, Hn

    return apply


def _bumped_chart(chart: Chart, bump) -> Chart:
    def f(U):
        return bump(chart.f(U), chart.df(U), chart.d2f(U))[0]

    def df(U):
        return bump(chart.f(U), chart.df(U), chart.d2f(U))[1]

    def d2f(U):
        return bump(chart.f(U), chart.df(U), chart.d2f(U))[2]

    return Chart(chart.m, chart.D, chart.lo, chart.hi, chart.periodic, f, df, d2f,
                 sample_lo=chart.sample_lo, sample_hi=chart.sample_hi)


def generic_perturbation(base: Scenario, amplitude: float, center=None, radius=None, direction=None) -> Scenario:
    """Push ``base`` through the ambient map ``x + a (1 - |x - c|^2 / rho^2)^3_+ v``.

    The bump lives in ambient space so overlapping charts stay consistent.
    Defaults: centre at 20% of the first chart's parameter range, radius a
    quarter of the diameter, direction the first normal vector there.
    """
    chart0 = base.charts[0]
    if center is None:
        u = chart0.lo + 0.2 * (chart0.hi - chart0.lo)
        center = chart0.eval(u[None])[0]
        if direction is None:
            direction = tangent_normal_frames(base, 0, u)[1][:, 0]
    if radius is None:
        radius = 0.25 * base.diameter
    if direction is None:
        c, u = locate(base, center)
        direction = tangent_normal_frames(base, c, u)[1][:, 0]
    bump = _bump_map(center, float(radius), direction, float(amplitude))
    charts = [_bumped_chart(ch, bump) for ch in base.charts]
    meta = dict(base.metadata)
    meta["bump"] = {"center": list(map(float, center)), "radius": float(radius),
                    "direction": list(map(float, np.asarray(direction, float))), "amplitude": float(amplitude)}
    meta.pop("expected_critical_count", None)
    return Scenario(f"{base.name}+bump({float(amplitude):g})", charts, base.m, base.D,
                    reach=None, diameter=None, metadata=meta)


# -- registry and JSON ---------------------------------------------------------------

BUILTINS = {
    "circle": circle,
    "ellipse": ellipse,
    "sphere": sphere,
    "ellipsoid": ellipsoid,
    "torus": torus,
    "paper_cubic": paper_cubic,
    "paper_cubic_perturbed": paper_cubic_perturbed,
}


def parse_shorthand(desc: str) -> Scenario:
    name, _, params = desc.partition(":")
    if name not in BUILTINS:
        raise KeyError(f"unknown scenario {name!r}; known: {', '.join(sorted(BUILTINS))}")
    args = [float(p) for p in params.split(",") if p.strip()] if params else []
    return BUILTINS[name](*args)


def get_scenario(desc) -> Scenario:
    """Scenario from a shorthand (``ellipse:2,1``), a JSON file path, or a dict."""
    if isinstance(desc, Scenario):
        return desc
    if isinstance(desc, dict):
        return scenario_from_dict(desc)
    path = Path(desc)
    if path.suffix == ".json" or path.is_file():
        return scenario_from_dict(json.loads(path.read_text()))
    return parse_shorthand(desc)


def _trig_terms_1d(terms, D):
    """Compile ``sum c u^p cos(w u + phi)`` per coordinate into f, f', f''."""
    by_coord = [[t for t in terms if int(t["coord"]) == k] for k in range(D)]

    def basis(u, p, w, ph):
        up = u**p
        up1 = p * u ** (p - 1) if p >= 1 else 0 * u
        up2 = p * (p - 1) * u ** (p - 2) if p >= 2 else 0 * u
        cs, sn = np.cos(w * u + ph), np.sin(w * u + ph)
        v = up * cs
        v1 = up1 * cs - w * up * sn
        v2 = up2 * cs - 2 * w * up1 * sn - w**2 * up * cs
        return v, v1, v2

    return by_coord, basis


def _poly_trig_chart(desc: dict, m: int, D: int) -> Chart:
    dom = desc["domain"]
    lo = np.atleast_1d(np.asarray(dom["lo"], float))
    hi = np.atleast_1d(np.asarray(dom["hi"], float))
    per = dom.get("periodic", False)
    periodic = tuple(per) if isinstance(per, list) else (bool(per),) * m
    by_coord, basis = _trig_terms_1d(desc["terms"], D)

    def factors(U, t):
        out = []
        for a in range(m):
            p = int(np.atleast_1d(t.get("p", 0))[a])
            w = float(np.atleast_1d(t.get("omega", 0.0))[a])
            ph = float(np.atleast_1d(t.get("phi", 0.0))[a])
            out.append(basis(U[:, a], p, w, ph))
        return out

    def all_parts(U):
        N = len(U)
        P = np.zeros((N, D))
        J = np.zeros((N, D, m))
        H = np.zeros((N, D, m, m))
        for k in range(D):
            for t in by_coord[k]:
                c = float(t["c"])
                fac = factors(U, t)
                val = np.prod([f[0] for f in fac], axis=0)
                P[:, k] += c * val
                for a in range(m):
                    da = np.prod([fac[b][1] if b == a else fac[b][0] for b in range(m)], axis=0)
                    J[:, k, a] += c * da
                    for bb in range(m):
                        if a == bb:
                            dab = np.prod([fac[e][2] if e == a else fac[e][0] for e in range(m)], axis=0)
                        else:
                            dab = np.prod([fac[e][1] if e in (a, bb) else fac[e][0] for e in range(m)], axis=0)
                        H[:, k, a, bb] += c * dab
        return P, J, H

    slo = desc.get("sample_lo")
    shi = desc.get("sample_hi")
    return Chart(m, D, lo, hi, periodic, lambda U: all_parts(U)[0], lambda U: all_parts(U)[1],
                 lambda U: all_parts(U)[2], sample_lo=slo, sample_hi=shi)


def scenario_from_dict(data: dict) -> Scenario:
    """Build a scenario from the JSON schema ``{name, m, D, charts, reach, diameter}``.

    Chart kinds: ``polynomial_trig`` (term list) or ``builtin`` (``{"builtin":
    "ellipse:2,1", "index": 0}`` reuses a chart of a built-in scenario).
    """
    from .schemas import SCENARIO_SCHEMA, validate

    validate(data, SCENARIO_SCHEMA)
    m, D = int(data["m"]), int(data["D"])
    charts = []
    for desc in data["charts"]:
        if desc["kind"] == "builtin":
            charts.append(parse_shorthand(desc["builtin"]).charts[int(desc.get("index", 0))])
        else:
            charts.append(_poly_trig_chart(desc, m, D))
    reach = data.get("reach")
    reach = None if reach in (None, "unknown") else float(reach)
    return Scenario(data["name"], charts, m, D, reach=reach, diameter=data.get("diameter"),
                    metadata=data.get("metadata", {}))
