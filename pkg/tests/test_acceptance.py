"""Acceptance battery: twelve checks, one printed PASS/FAIL line each.

The toy-training fixture behind criteria 9 and 10 trains three 2000-step
models on CPU and dominates the runtime (25-30 minutes); every other
criterion resolves in seconds.  Run with `-s` to watch the verdict lines.
"""

import math
import os
import time
from dataclasses import replace

import numpy as np
import pytest

from mptdeblur import tensor as T
from mptdeblur.blocks import (
    CswaParams,
    FefnParams,
    IscaParams,
    RelPosBias,
    SubBlockParams,
    cswa_forward,
    fefn_forward,
    fefn_hidden_dim,
    isca_forward,
    rel_pos_index,
    sub_block_forward,
)
from mptdeblur.cli import main as cli_main
from mptdeblur.config import preset_config
from mptdeblur.data import (
    FormatError,
    list_pairs,
    load_image,
    load_store,
    load_tensor,
    save_image,
    save_store,
    save_tensor,
)
from mptdeblur.frequency import (
    ContrastiveBatch,
    cr_basic,
    cr_extended,
    efcr_ex_labeled,
    efcr_total,
    f_high,
    haar_dwt,
    haar_idwt,
)
from mptdeblur.gradcheck import gradcheck
from mptdeblur.metrics import attention_distance
from mptdeblur.network import (
    MptConfig,
    build_model,
    cswa_attention_macs,
    flops_estimate,
    flops_report,
    mpt_forward,
    param_count,
)
from mptdeblur.tensor import Tape, Tensor, no_grad
from mptdeblur.training import (
    TrainConfig,
    load_checkpoint,
    save_checkpoint,
    split_train_val,
    train,
)
from mptdeblur.windows import (
    ScaleSpec,
    cross_scale_index,
    cyclic_shift,
    window_merge,
    window_partition,
)


def _verdict(num: int, label: str, ok: bool, detail: str = ""):
    tail = f" ({detail})" if detail else ""
    print(f"[criterion {num:02d}] {label}: {'PASS' if ok else 'FAIL'}{tail}")
    assert ok, f"criterion {num} ({label}){tail}"


# -- shared builders -------------------------------------------------------------


def _t(r, shape, dtype, scale=0.5, grad=True) -> Tensor:
    return Tensor((r.standard_normal(shape) * scale).astype(dtype), requires_grad=grad)


def _delta_dw(c, dtype) -> Tensor:
    w = np.zeros((3, 3, 1, c), dtype=dtype)
    w[1, 1, 0, :] = 1.0
    return Tensor(w, requires_grad=True)


def _sub_block(r, c, h, m, ratio, dtype, shifted=False, with_isca=True,
               delta_dw=False, ws=0.5) -> SubBlockParams:
    dw = (lambda: _delta_dw(c, dtype)) if delta_dw else (lambda: _t(r, (3, 3, 1, c), dtype, ws))
    cswa = CswaParams(
        w_q_dw=dw(), w_q_pw=_t(r, (c, c), dtype, ws),
        w_k_dw=dw(), w_k_pw=_t(r, (c, c), dtype, ws),
        w_v_dw=dw(), w_v_pw=_t(r, (c, c), dtype, ws),
        w_ds=_t(r, (c, c), dtype, ws) if ratio > 1 else None,
        b_ds=_t(r, (c,), dtype, ws) if ratio > 1 else None,
        w_out=_t(r, (c, c), dtype, ws), b_out=_t(r, (c,), dtype, ws),
        bias=RelPosBias(table=_t(r, ((2 * m - 1) ** 2, h), dtype, ws),
                        index=rel_pos_index(m)),
    )
    isca = None
    if with_isca:
        isca = IscaParams(
            w_q_pw=_t(r, (c, c), dtype, ws), w_q_dw=_t(r, (3, 3, 1, c), dtype, ws),
            w_k_pw=_t(r, (c, c), dtype, ws), w_k_dw=_t(r, (3, 3, 1, c), dtype, ws),
            w_v_pw=_t(r, (c, c), dtype, ws), w_v_dw=_t(r, (3, 3, 1, c), dtype, ws),
            tau=Tensor(np.ones((h, 1, 1), dtype=dtype), requires_grad=True),
            w_out=_t(r, (c, c), dtype, ws), b_out=_t(r, (c,), dtype, ws),
        )
    e = fefn_hidden_dim(c, h)
    fefn = FefnParams(
        w1=_t(r, (c, e), dtype, ws), b1=_t(r, (e,), dtype, ws),
        w2=_t(r, (c, e), dtype, ws), b2=_t(r, (e,), dtype, ws),
        w_p=_t(r, (e, c), dtype, ws), b_p=_t(r, (c,), dtype, ws),
    )
    one = lambda: Tensor(np.ones(c, dtype=dtype), requires_grad=True)
    zero = lambda: Tensor(np.zeros(c, dtype=dtype), requires_grad=True)
    return SubBlockParams(
        ln1_g=one(), ln1_b=zero(),
        ln2_g=one() if with_isca else None,
        ln2_b=zero() if with_isca else None,
        cswa=cswa, isca=isca, fefn=fefn,
        heads=h, spec=ScaleSpec(ratio), shifted=shifted, m=m,
    )


# -- 1. parameter count ----------------------------------------------------------


def test_01_parameter_count():
    n = param_count(preset_config("paper").model)
    _verdict(1, "parameter count in published band", 18.81e6 <= n <= 20.79e6, f"n={n:,}")


# -- 2. flops headline -----------------------------------------------------------


def test_02_flops_headline():
    cfg = preset_config("paper").model
    g = flops_estimate(cfg, 256, 256)
    conv = flops_report(cfg, 256, 256)["convention"]
    ok = 64.6e9 <= g <= 87.4e9 and "MAC" in conv and "2" in conv
    _verdict(2, "flops estimate in published band", ok, f"{g / 1e9:.2f}G, MACx2 note present")


# -- 3. attention cost invariant in the scale ------------------------------------


def test_03_attention_cost_scale_invariance():
    h_map = w_map = 32
    c, heads, m = 16, 2, 4
    r = np.random.default_rng(3)
    costs, counted = {}, {}
    for ratio in (1, 2, 4):
        spec = ScaleSpec(ratio)
        costs[ratio] = cswa_attention_macs(h_map, w_map, c, heads, m, spec)
        # recount from the actual gathered window shapes
        q = Tensor(r.standard_normal((1, h_map, w_map, c)).astype(np.float32))
        side = h_map // ratio
        k = Tensor(r.standard_normal((1, side, side, c)).astype(np.float32))
        _, gq = window_partition(q, m)
        kw, gk = window_partition(k, m)
        gathered = T.gather(kw, cross_scale_index(gq, gk, spec), axis=1)
        nwin, msq = gathered.shape[1], gathered.shape[2]
        counted[ratio] = 2 * heads * nwin * msq * msq * (c // heads)
    ok = (
        len(set(costs.values())) == 1
        and all(costs[s] == counted[s] for s in costs)
        and costs[1] > 0
    )
    _verdict(3, "attention matmul cost equal at s=1,1/2,1/4", ok, f"macs={costs[1]:,}")


# -- 4. receptive field grows quadratically with 1/s ------------------------------


def _grad_footprint(ratio: int) -> np.ndarray:
    c, m = 4, 4
    r = np.random.default_rng(40 + ratio)
    p = _sub_block(r, c, 1, m, ratio, np.float32, with_isca=False, delta_dw=True)
    x = Tensor(r.standard_normal((1, 16, 16, c)).astype(np.float32), requires_grad=True)
    with Tape() as tape:
        out = cswa_forward(x, p)
        win = out[:, 8:12, 4:8, :]
        # squared loss: a channel-uniform gradient dies in the layer-norm
        # jacobian and would hide the attention path
        loss = T.reduce_sum(T.mul(win, win))
    tape.backward(loss)
    return np.any(x.grad != 0.0, axis=(0, 3))


def test_04_receptive_field_footprint():
    fails = []
    for ratio, region in ((1, (slice(8, 12), slice(4, 8))), (2, (slice(8, 16), slice(0, 8)))):
        mask = _grad_footprint(ratio)
        inside = mask[region]
        outside = mask.copy()
        outside[region] = False
        if not inside.all():
            fails.append(f"s=1/{ratio}: {int(inside.sum())}/{inside.size} inside")
        if outside.any():
            fails.append(f"s=1/{ratio}: {int(outside.sum())} stray")
    _verdict(4, "footprint 4x4 at s=1 and 8x8 at s=1/2", not fails,
             "; ".join(fails) or "16 and 64 pixels exactly")


# -- 5. vanilla window-attention oracle -------------------------------------------


def _vanilla_window_attention(x, g, b, wq, wk, wv, table, w_out, b_out, m, heads):
    """Loop-level reference: LN, per-pixel projections, per-window softmax
    attention with a relative-offset bias, output projection, residual."""
    hh, ww, c = x.shape
    d = c // heads
    mu = x.mean(axis=-1, keepdims=True)
    var = ((x - mu) ** 2).mean(axis=-1, keepdims=True)
    ln = (x - mu) / np.sqrt(var + 1e-5) * g + b
    q, k, v = ln @ wq, ln @ wk, ln @ wv
    out = np.zeros_like(x)
    for wr in range(hh // m):
        for wc in range(ww // m):
            sl = (slice(wr * m, (wr + 1) * m), slice(wc * m, (wc + 1) * m))
            qs, ks, vs = (t[sl].reshape(m * m, c) for t in (q, k, v))
            acc = np.zeros((m * m, c), dtype=x.dtype)
            for head in range(heads):
                cols = slice(head * d, (head + 1) * d)
                logits = qs[:, cols] @ ks[:, cols].T / math.sqrt(d)
                for i in range(m * m):
                    yi, xi = divmod(i, m)
                    for j in range(m * m):
                        yj, xj = divmod(j, m)
                        bin_ = (yi - yj + m - 1) * (2 * m - 1) + (xi - xj + m - 1)
                        logits[i, j] += table[bin_, head]
                e = np.exp(logits - logits.max(axis=-1, keepdims=True))
                acc[:, cols] = (e / e.sum(axis=-1, keepdims=True)) @ vs[:, cols]
            out[sl] = acc.reshape(m, m, c)
    return out @ w_out + b_out + x


def test_05_window_attention_oracle():
    shapes = [(4, 1, 2), (4, 2, 2), (8, 2, 4), (6, 3, 2), (8, 4, 4)]
    worst = 0.0
    for i in range(20):
        c, h, m = shapes[i % len(shapes)]
        r = np.random.default_rng(500 + i)
        p = _sub_block(r, c, h, m, 1, np.float32, with_isca=False, delta_dw=True)
        x = r.standard_normal((m * (2 + i % 3), m * (3 + i % 2), c)).astype(np.float32)
        with no_grad():
            got = cswa_forward(Tensor(x), p).numpy()
        want = _vanilla_window_attention(
            x, p.ln1_g.data, p.ln1_b.data,
            p.cswa.w_q_pw.data, p.cswa.w_k_pw.data, p.cswa.w_v_pw.data,
            p.cswa.bias.table.data, p.cswa.w_out.data, p.cswa.b_out.data, m, h,
        )
        worst = max(worst, float(np.abs(got - want).max()))
    _verdict(5, "cswa matches vanilla window attention", worst <= 1e-5,
             f"max abs err {worst:.3g} over 20 instances")


# -- 6. exact wavelet algebra ------------------------------------------------------


def test_06_haar_exactness():
    worst_rt, worst_energy = 0.0, 0.0
    for i in range(20):
        r = np.random.default_rng(600 + i)
        x = r.standard_normal((64, 64, 3))
        bands = haar_dwt(Tensor(x))
        back = haar_idwt(bands).numpy()
        worst_rt = max(worst_rt, float(np.abs(back - x).max()))
        e_in = float((x**2).sum())
        e_bands = sum(float((b.numpy() ** 2).sum())
                      for b in (bands.ll, bands.lh, bands.hl, bands.hh))
        worst_energy = max(worst_energy, abs(e_bands - e_in) / e_in)
    ok = worst_rt <= 1e-6 and worst_energy <= 1e-5
    _verdict(6, "haar roundtrip and energy balance", ok,
             f"roundtrip {worst_rt:.3g}, energy rel {worst_energy:.3g}")


# -- 7. finite-difference gradients everywhere ------------------------------------


def _keep_away(a, floor):
    return np.sign(a) * (np.abs(a) + floor)


def _op_cases(dtype, r):
    mk = lambda a, grad=True: Tensor(np.asarray(a, dtype=dtype), requires_grad=grad)
    n = lambda *s: r.standard_normal(s) * 0.7
    x = mk(n(2, 3))
    y = mk(n(2, 3))
    yb = mk(n(3))
    den = mk(_keep_away(n(2, 3), 0.6))
    ab = mk(_keep_away(n(2, 3), 0.4))
    sq = mk(np.abs(n(2, 3)) + 0.3)
    sm = mk(n(2, 5))
    m1, m2 = mk(n(2, 3, 4)), mk(n(2, 4, 2))
    lx, lw, lb = mk(n(2, 3, 4)), mk(n(4, 5)), mk(n(5))
    nx, ng, nb = mk(n(2, 3, 6)), mk(1.0 + 0.1 * n(6)), mk(0.1 * n(6))
    cx, cw, cb = mk(n(1, 5, 5, 3)), mk(n(3, 3, 3, 4)), mk(n(4))
    dx, dw = mk(n(1, 5, 5, 4)), mk(n(3, 3, 1, 4))
    gx, gw, gb = mk(n(1, 4, 4, 4)), mk(n(3, 3, 2, 6)), mk(n(6))
    px = mk(n(1, 4, 6, 3))
    sd, su = mk(n(1, 4, 4, 4)), mk(n(1, 2, 2, 8))
    t5 = mk(n(4, 5, 2))
    pp = mk(n(1, 3, 4, 2))
    cc = mk(n(1, 5, 6, 2))
    rl = mk(n(1, 4, 5, 3))
    tg = mk(n(5, 3))
    idx = np.array([0, 2, 2, 4])
    la = mk(n(3, 4))
    lbd = mk(la.data + _keep_away(n(3, 4), 0.5))
    return [
        ("add", lambda: T.add(x, y), {"x": x, "y": y}),
        ("sub", lambda: T.sub(x, y), {"x": x, "y": y}),
        ("mul_broadcast", lambda: T.mul(x, yb), {"x": x, "yb": yb}),
        ("div", lambda: T.div(x, den), {"x": x, "den": den}),
        ("neg", lambda: T.neg(x), {"x": x}),
        ("abs", lambda: T.abs_(ab), {"ab": ab}),
        ("sqrt", lambda: T.sqrt(sq), {"sq": sq}),
        ("gelu", lambda: T.gelu(x), {"x": x}),
        ("softmax", lambda: T.softmax(sm, axis=-1), {"sm": sm}),
        ("matmul", lambda: T.matmul(m1, m2), {"m1": m1, "m2": m2}),
        ("linear", lambda: T.linear(lx, lw, lb), {"lx": lx, "lw": lw, "lb": lb}),
        ("layer_norm", lambda: T.layer_norm(nx, ng, nb, eps=1e-5),
         {"nx": nx, "ng": ng, "nb": nb}),
        ("conv2d_dense", lambda: T.conv2d(cx, cw, cb, stride=2, padding=1),
         {"cx": cx, "cw": cw, "cb": cb}),
        ("conv2d_depthwise", lambda: T.conv2d(dx, dw, None, padding=1, groups=4),
         {"dx": dx, "dw": dw}),
        ("conv2d_grouped", lambda: T.conv2d(gx, gw, gb, padding=1, groups=2),
         {"gx": gx, "gw": gw, "gb": gb}),
        ("avg_pool2d", lambda: T.avg_pool2d(px, 2, 2), {"px": px}),
        ("pixel_shuffle_down", lambda: T.pixel_shuffle_down(sd, 2), {"sd": sd}),
        ("pixel_shuffle_up", lambda: T.pixel_shuffle_up(su, 2), {"su": su}),
        ("reshape_transpose", lambda: T.transpose(T.reshape(x, (3, 2)), (1, 0)), {"x": x}),
        ("concat", lambda: T.concat([x, y], axis=1), {"x": x, "y": y}),
        ("slice", lambda: t5[1:3, ::2, :], {"t5": t5}),
        ("pad2d", lambda: T.pad2d(pp, 2, 1), {"pp": pp}),
        ("crop2d", lambda: T.crop2d(cc, 3, 4), {"cc": cc}),
        ("roll2d", lambda: T.roll2d(rl, 1, 2), {"rl": rl}),
        ("gather_dup", lambda: T.gather(tg, idx, axis=0), {"tg": tg}),
        ("reduce_sum_axis", lambda: T.reduce_sum(m1, axis=1), {"m1": m1}),
        ("reduce_mean", lambda: T.reduce_mean(m1, axis=2), {"m1": m1}),
        ("l1_distance", lambda: T.l1_distance(la, lbd), {"la": la, "lbd": lbd}),
    ]


def _mean_square(fn):
    def make_loss():
        out = fn()
        return T.reduce_mean(T.mul(out, out))

    return make_loss


def _tiny_mpt(dtype):
    cfg = MptConfig(
        base_dim=4,
        heads=(1, 2, 4, 8),
        sub_blocks=(2, 2, 2, 2),
        scales=((2, 1), (1, 1), (1, 1), (1, 1)),
        m=2,
    )
    store = build_model(cfg, 7)
    if dtype is not np.float32:
        for _, p in store.items():
            p.data = p.data.astype(dtype)
    return store


def _block_cases(dtype, r):
    c, h, m = 4, 2, 2
    p1 = _sub_block(r, c, h, m, 1, dtype, ws=0.2)
    x1 = _t(r, (1, 4, 4, c), dtype)
    p2 = _sub_block(r, c, h, m, 2, dtype, shifted=True, ws=0.2)
    x2 = _t(r, (1, 8, 8, c), dtype)
    pf = _sub_block(r, c, h, m, 1, dtype, ws=0.2)
    f1, f2 = _t(r, (1, 3, 3, c), dtype), _t(r, (1, 3, 3, c), dtype)
    store = _tiny_mpt(dtype)
    xm = _t(r, (1, 16, 16, 3), dtype)
    names = [k for k, _ in store.items()]
    picks = names[:: max(1, len(names) // 6)][:7]
    mpt_wrt = {"x": xm, **{k: store[k] for k in picks}}

    # the contrastive terms are sums of |band differences|; build the
    # differences in band space with floors so finite-difference steps
    # cannot cross an absolute-value kink
    def kink_free_diff():
        sgn = lambda: (r.integers(0, 2, (2, 2, 3)) * 2.0 - 1.0)
        mag = lambda lo: lo + 0.1 * r.random((2, 2, 3))
        band = lambda lo: Tensor((sgn() * mag(lo)).astype(dtype))
        from mptdeblur.frequency import FrequencyBands
        return haar_idwt(FrequencyBands(ll=band(2.0), lh=band(0.3),
                                        hl=band(0.3), hh=band(0.3))).numpy()

    i_gt = _t(r, (4, 4, 3), dtype, 0.3, grad=False)
    b_in = _t(r, (4, 4, 3), dtype, 0.3, grad=False)
    i_out = Tensor(i_gt.data + kink_free_diff(), requires_grad=True)
    i_in = Tensor(i_out.data - kink_free_diff(), requires_grad=False)
    b_out = Tensor(b_in.data + kink_free_diff(), requires_grad=True)

    def efcr_loss():
        batch = ContrastiveBatch(i_gt=i_gt, i_in=i_in, i_out=i_out, b_in=b_in, b_out=b_out)
        pos, neg = cr_basic(batch)
        ext = cr_extended(batch)
        return efcr_total(T.l1_distance(i_out, i_gt), [(pos, neg, ext)], beta=0.1).total

    return [
        ("cswa_s1", lambda: cswa_forward(x1, p1),
         {"x": x1, "w_q_pw": p1.cswa.w_q_pw, "w_v_dw": p1.cswa.w_v_dw,
          "table": p1.cswa.bias.table, "w_out": p1.cswa.w_out, "ln1_g": p1.ln1_g}),
        ("cswa_s_half_shifted", lambda: cswa_forward(x2, p2),
         {"x": x2, "w_ds": p2.cswa.w_ds, "w_k_pw": p2.cswa.w_k_pw}),
        ("isca", lambda: isca_forward(x1, p1),
         {"x": x1, "w_q_pw": p1.isca.w_q_pw, "tau": p1.isca.tau, "ln2_g": p1.ln2_g}),
        ("fefn", lambda: fefn_forward(f1, f2, pf),
         {"f1": f1, "f2": f2, "w1": pf.fefn.w1, "w_p": pf.fefn.w_p}),
        ("sub_block", lambda: sub_block_forward(x2, p2),
         {"x": x2, "w_q_pw": p2.cswa.w_q_pw, "isca_w_v": p2.isca.w_v_pw,
          "fefn_w2": p2.fefn.w2, "ln1_g": p2.ln1_g, "ln2_b": p2.ln2_b}),
        ("tiny_mpt", lambda: mpt_forward(store, xm), mpt_wrt),
        ("efcr_loss", efcr_loss, {"i_out": i_out, "b_out": b_out}),
    ]


def test_07_gradient_checks():
    t0 = time.monotonic()
    fails = []
    total = 0
    for tag, dtype in (("f32", np.float32), ("f64", np.float64)):
        r = np.random.default_rng(70)
        for name, fn, wrt in _op_cases(dtype, r) + _block_cases(dtype, r):
            scalar = name in ("efcr_loss", "l1_distance")
            make_loss = fn if scalar else _mean_square(fn)
            rep = gradcheck(make_loss, wrt)
            total += 1
            if not rep.ok:
                fails.append(f"{name}.{tag}: {rep}")
    dt = time.monotonic() - t0
    ok = not fails and dt < 120.0
    _verdict(7, "gradcheck over ops, blocks, tiny model, loss", ok,
             "; ".join(fails) or f"{total} checks in {dt:.1f}s")


# -- 8. contrastive loss arithmetic ------------------------------------------------


def test_08_efcr_arithmetic():
    fails = []
    sc = lambda v: Tensor(np.asarray(v, dtype=np.float64), requires_grad=False)
    terms = efcr_total(sc(0.5), [(sc(2.0), sc(1.0), sc(1.0))], beta=1e-5)
    if abs(terms.total.item() - 0.50001) > 1e-6:
        fails.append(f"fixed example total {terms.total.item()!r}")

    # detail-band terms must ignore any block-constant (pure-LL) intensity shift
    r = np.random.default_rng(80)
    img = lambda: Tensor(r.random((8, 8, 3)))
    fields = dict(i_gt_p=img(), i_in_p=img(), i_out_p=img(), b_in_p=img(), b_out_p=img())
    base = [t.item() for t in efcr_ex_labeled(ContrastiveBatch(**fields))]
    for name in fields:
        bump = np.repeat(np.repeat(r.random((4, 4, 3)), 2, axis=0), 2, axis=1)
        shifted = dict(fields)
        shifted[name] = Tensor(fields[name].data + bump)
        got = [t.item() for t in efcr_ex_labeled(ContrastiveBatch(**shifted))]
        drift = max(abs(a - b) for a, b in zip(base, got))
        if drift > 1e-6:
            fails.append(f"LL shift on {name} moved terms by {drift:.3g}")
    _verdict(8, "efcr fixed example and LL insensitivity", not fails, "; ".join(fails))


# -- 9 and 10. toy training --------------------------------------------------------


@pytest.fixture(scope="session")
def toy_runs(tmp_path_factory):
    root = tmp_path_factory.mktemp("accept")
    data = root / "data"
    assert cli_main(["synth", "--out", str(data), "--count", "32", "--size", "64"]) == 0
    base = preset_config("desk")

    def run(tag, efcr):
        cfg = replace(base, seed=0, efcr=efcr, data_root=str(data),
                      out_ckpt=str(root / f"{tag}.mptt"))
        t0 = time.monotonic()
        result = train(cfg)
        return result, time.monotonic() - t0

    off1, dt_off = run("off1", "off")
    off2, _ = run("off2", "off")
    basic, _ = run("basic", "basic")

    pairs, _ = list_pairs(data)
    _, val_idx = split_train_val([os.path.basename(p) for p, _, _ in pairs], 0, 0.1)

    def val_l1(store):
        tot = 0.0
        with no_grad():
            for i in val_idx:
                sharp_p, blur_p, _ = pairs[i]
                out = mpt_forward(store, Tensor(load_image(blur_p))).numpy()
                tot += float(np.abs(out - load_image(sharp_p)).mean())
        return tot / len(val_idx)

    return {
        "off1": off1, "off2": off2, "basic": basic, "dt_off": dt_off,
        "l1_off": val_l1(off1.store), "l1_basic": val_l1(basic.store),
    }


def test_09_toy_training(toy_runs):
    off1, off2 = toy_runs["off1"], toy_runs["off2"]
    gain = off1.val_psnr - off1.baseline_psnr
    fails = []
    if gain < 3.0:
        fails.append(f"gain {gain:.2f} dB < 3 dB")
    if off1.log != off2.log:
        diff = sum(a != b for a, b in zip(off1.log, off2.log))
        fails.append(f"rerun log differs on {diff} lines")
    if toy_runs["dt_off"] >= 1800.0:
        fails.append(f"run took {toy_runs['dt_off']:.0f}s")
    _verdict(9, "toy run gains 3 dB and reruns bit-exact", not fails,
             "; ".join(fails) or
             f"+{gain:.2f} dB over {off1.baseline_psnr:.2f}, {toy_runs['dt_off']:.0f}s")


def test_10_efcr_does_not_degrade(toy_runs):
    ratio = toy_runs["l1_basic"] / toy_runs["l1_off"]
    _verdict(10, "efcr=basic final val L1 within 1.05x of off", ratio <= 1.05,
             f"ratio {ratio:.4f}")


# -- 11. roundtrips and rejection ---------------------------------------------------


def test_11_roundtrips_and_formats(tmp_path):
    fails = []
    r = np.random.default_rng(110)

    x = Tensor(r.standard_normal((9, 11, 5)).astype(np.float32))
    wins, grid = window_partition(x, 4)
    if not np.array_equal(window_merge(wins, grid).numpy(), x.numpy()):
        fails.append("padded window partition/merge")
    y = Tensor(r.standard_normal((2, 8, 8, 3)).astype(np.float32))
    if not np.array_equal(
        cyclic_shift(cyclic_shift(y, 2), 2, inverse=True).numpy(), y.numpy()
    ):
        fails.append("cyclic shift inverse")
    z = Tensor(r.standard_normal((1, 6, 4, 8)).astype(np.float32))
    if not np.array_equal(
        T.pixel_shuffle_up(T.pixel_shuffle_down(z, 2), 2).numpy(), z.numpy()
    ):
        fails.append("pixel shuffle")

    img = (r.integers(0, 256, (10, 7, 3)) / 255.0).astype(np.float32)
    p1, p2 = tmp_path / "a.ppm", tmp_path / "b.ppm"
    save_image(p1, img)
    save_image(p2, load_image(p1))
    if p1.read_bytes() != p2.read_bytes():
        fails.append("image file roundtrip")

    arr = r.standard_normal((3, 4, 2))
    save_tensor(tmp_path / "t.mptt", arr)
    back = load_tensor(tmp_path / "t.mptt")
    if not (np.array_equal(back, arr) and back.dtype == arr.dtype):
        fails.append("tensor container roundtrip")
    entries = {"b": arr.astype(np.float32), "a": np.zeros((2,), dtype=np.float64)}
    save_store(tmp_path / "s.mptt", entries, {"k": "v"})
    got_e, got_m = load_store(tmp_path / "s.mptt")
    if list(got_e) != ["b", "a"] or got_m != {"k": "v"} or not np.array_equal(got_e["b"], entries["b"]):
        fails.append("store container roundtrip")

    cfg = TrainConfig(model=MptConfig(base_dim=4, heads=(1, 1, 1, 1),
                                      sub_blocks=(2, 2, 2, 2),
                                      scales=((1, 1), (1, 1), (1, 1), (1, 1)), m=2))
    store = build_model(cfg.model, 0)
    save_checkpoint(tmp_path / "c.mptt", store, None, cfg, step=12)
    store2, cfg2, _, meta = load_checkpoint(tmp_path / "c.mptt")
    same = all(np.array_equal(store[k].data, store2[k].data) for k, _ in store.items())
    if not (same and meta["step"] == "12" and cfg2.model.hash() == cfg.model.hash()):
        fails.append("checkpoint roundtrip")

    blob = p1.read_bytes()
    bad_blobs = [
        b"P3" + blob[2:],          # ascii variant refused
        blob[:-5],                 # truncated payload
        blob[:9],                  # truncated header
    ]
    for i, bad in enumerate(bad_blobs):
        f = tmp_path / f"bad{i}.ppm"
        f.write_bytes(bad)
        try:
            load_image(f)
            fails.append(f"malformed image {i} accepted")
        except FormatError:
            pass
    cblob = (tmp_path / "t.mptt").read_bytes()
    bad_containers = [b"MPTX" + cblob[4:], cblob[:-3], cblob + b"\x01"]
    for i, bad in enumerate(bad_containers):
        f = tmp_path / f"badc{i}.mptt"
        f.write_bytes(bad)
        try:
            load_tensor(f)
            fails.append(f"malformed container {i} accepted")
        except FormatError:
            pass
    _verdict(11, "exact roundtrips, malformed files rejected", not fails, "; ".join(fails))


# -- 12. attention distance ---------------------------------------------------------


def _nad_enumeration(arr, p):
    """Plain-loop oracle over every patch pair."""
    a = np.asarray(arr, dtype=np.float64)
    if a.ndim == 3:
        a = a.mean(axis=2)
    h, w = a.shape
    hc, wc = (h // p) * p, (w // p) * p
    a = a[:hc, :wc]
    ph, pw = hc // p, wc // p
    vecs, centers = [], []
    for i in range(p):
        for j in range(p):
            patch = a[i * ph:(i + 1) * ph, j * pw:(j + 1) * pw].reshape(-1)
            cen = patch - patch.mean()
            norm = math.sqrt(float((cen**2).sum()))
            if norm > 1e-12:
                vecs.append(cen / norm)
                centers.append(((i + 0.5) * ph, (j + 0.5) * pw))
    if len(vecs) < 2:
        return 0.0
    diag = math.sqrt(hc * hc + wc * wc)
    total = 0.0
    for i, vi in enumerate(vecs):
        logits, dists = [], []
        for j, vj in enumerate(vecs):
            if j == i:
                continue
            logits.append(float((vi * vj).sum()))
            dists.append(math.hypot(centers[i][0] - centers[j][0],
                                    centers[i][1] - centers[j][1]))
        mx = max(logits)
        es = [math.exp(v - mx) for v in logits]
        s = sum(es)
        total += sum(e / s * d for e, d in zip(es, dists)) / diag
    return total / len(vecs)


def test_12_attention_distance_properties():
    fails = []
    r = np.random.default_rng(120)

    for shape, p in (((16, 16), 2), ((12, 20, 3), 4), ((33, 31), 4)):
        v = attention_distance(r.random(shape), p)
        if not 0.0 <= v <= 1.0:
            fails.append(f"nad {v} out of range for {shape}")

    base_img = r.random((24, 24, 3))
    v0 = attention_distance(base_img, 4)
    for a, b in ((1.7, 0.25), (0.5, -0.1), (-0.6, 0.4)):
        if abs(attention_distance(a * base_img + b, 4) - v0) > 1e-9:
            fails.append(f"affine ({a}, {b}) moved the statistic")

    for i in range(5):
        arr = r.random((7, 9, 3)) if i % 2 else r.standard_normal((8, 8))
        got = attention_distance(arr, 2)
        want = _nad_enumeration(arr, 2)
        if abs(got - want) > 1e-9:
            fails.append(f"enumeration mismatch {got} vs {want}")

    wrong_order = 0
    for seed in range(20):
        rr = np.random.default_rng(1200 + seed)
        a = rr.standard_normal((16, 16))
        rep = np.block([[a, -a], [-a, a]])
        noise = rr.standard_normal((32, 32))
        if attention_distance(rep, 2) <= attention_distance(noise, 2):
            wrong_order += 1
    if wrong_order:
        fails.append(f"{wrong_order}/20 A/B pairs misordered")
    _verdict(12, "attention distance range, invariance, oracle, A/B", not fails,
             "; ".join(fails))
