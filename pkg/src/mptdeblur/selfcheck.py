"""Self-verification battery behind the selftest subcommand.

Every check prints one PASS/FAIL line.  The battery covers gradient checks
for each op family and block, the wavelet and windowing roundtrips, the
cross-scale index bookkeeping, a from-scratch window-attention oracle, the
attention-cost invariance claim, and the receptive-field footprint.
"""

from __future__ import annotations

import os
import tempfile

import numpy as np

from . import tensor as T
from .blocks import (
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
from .data import FormatError, load_store, save_store
from .frequency import (
    ContrastiveBatch,
    cr_basic,
    cr_extended,
    efcr_total,
    f_high,
    gaussian_reblur,
    haar_dwt,
    haar_idwt,
)
from .gradcheck import gradcheck
from .metrics import attention_distance, psnr, ssim
from .optim import AdamW
from .rng import Rng, splitmix64
from .tensor import Tape, Tensor
from .windows import (
    ScaleSpec,
    cross_scale_index,
    cyclic_shift,
    downsample_cswa,
    npconv,
    window_merge,
    window_partition,
)
from .network import cswa_attention_macs

__all__ = ["run_selftest", "SELFTEST_PRECISIONS"]

SELFTEST_PRECISIONS = ("f32", "f64")

_GC_SETTINGS = {
    "f32": {"step": 1e-3, "rtol": 1e-3, "atol": 2e-4},
    "f64": {"step": 1e-6, "rtol": 1e-5, "atol": 1e-9},
}
_DTYPES = {"f32": np.float32, "f64": np.float64}


def _rand(rng: Rng, shape, dtype, scale=0.5, grad=True) -> Tensor:
    data = rng.bulk_normal(int(np.prod(shape))).reshape(shape) * scale
    return Tensor(data.astype(dtype), requires_grad=grad)


def _identity_cswa(c: int, m: int, dtype, with_ds: bool) -> CswaParams:
    delta = np.zeros((3, 3, 1, c), dtype=dtype)
    delta[1, 1, 0, :] = 1.0
    eye = np.eye(c, dtype=dtype)
    zc = np.zeros(c, dtype=dtype)
    t = lambda a: Tensor(a.copy(), requires_grad=True)
    return CswaParams(
        w_q_dw=t(delta), w_q_pw=t(eye),
        w_k_dw=t(delta), w_k_pw=t(eye),
        w_v_dw=t(delta), w_v_pw=t(eye),
        w_ds=t(np.zeros((c, c), dtype=dtype)) if with_ds else None,
        b_ds=t(zc) if with_ds else None,
        w_out=t(eye), b_out=t(zc),
        bias=RelPosBias(
            table=t(np.zeros(((2 * m - 1) ** 2, 1), dtype=dtype)),
            index=rel_pos_index(m),
        ),
    )


def _random_sub_block(rng: Rng, c: int, h: int, m: int, ratio: int, dtype,
                      shifted: bool = False, with_isca: bool = True) -> SubBlockParams:
    s = 0.2
    spec = ScaleSpec(ratio)
    cswa = CswaParams(
        w_q_dw=_rand(rng, (3, 3, 1, c), dtype, s), w_q_pw=_rand(rng, (c, c), dtype, s),
        w_k_dw=_rand(rng, (3, 3, 1, c), dtype, s), w_k_pw=_rand(rng, (c, c), dtype, s),
        w_v_dw=_rand(rng, (3, 3, 1, c), dtype, s), w_v_pw=_rand(rng, (c, c), dtype, s),
        w_ds=_rand(rng, (c, c), dtype, s) if ratio > 1 else None,
        b_ds=_rand(rng, (c,), dtype, s) if ratio > 1 else None,
        w_out=_rand(rng, (c, c), dtype, s), b_out=_rand(rng, (c,), dtype, s),
        bias=RelPosBias(
            table=_rand(rng, ((2 * m - 1) ** 2, h), dtype, s),
            index=rel_pos_index(m),
        ),
    )
    isca = None
    if with_isca:
        isca = IscaParams(
            w_q_pw=_rand(rng, (c, c), dtype, s), w_q_dw=_rand(rng, (3, 3, 1, c), dtype, s),
            w_k_pw=_rand(rng, (c, c), dtype, s), w_k_dw=_rand(rng, (3, 3, 1, c), dtype, s),
            w_v_pw=_rand(rng, (c, c), dtype, s), w_v_dw=_rand(rng, (3, 3, 1, c), dtype, s),
            tau=Tensor(np.ones((h, 1, 1), dtype=dtype), requires_grad=True),
            w_out=_rand(rng, (c, c), dtype, s), b_out=_rand(rng, (c,), dtype, s),
        )
    e = fefn_hidden_dim(c, h)
    fefn = FefnParams(
        w1=_rand(rng, (c, e), dtype, s), b1=_rand(rng, (e,), dtype, s),
        w2=_rand(rng, (c, e), dtype, s), b2=_rand(rng, (e,), dtype, s),
        w_p=_rand(rng, (e, c), dtype, s), b_p=_rand(rng, (c,), dtype, s),
    )
    return SubBlockParams(
        ln1_g=Tensor(np.ones(c, dtype=dtype), requires_grad=True),
        ln1_b=Tensor(np.zeros(c, dtype=dtype), requires_grad=True),
        ln2_g=Tensor(np.ones(c, dtype=dtype), requires_grad=True) if with_isca else None,
        ln2_b=Tensor(np.zeros(c, dtype=dtype), requires_grad=True) if with_isca else None,
        cswa=cswa, isca=isca, fefn=fefn,
        heads=h, spec=spec, shifted=shifted, m=m,
    )


# -- numpy window-attention reference (kept free of the tensor module on purpose) --


def _np_layer_norm(x, g, b, eps=1e-5):
    mu = x.mean(axis=-1, keepdims=True)
    var = ((x - mu) ** 2).mean(axis=-1, keepdims=True)
    return (x - mu) / np.sqrt(var + eps) * g + b


def _np_dw3(x, w):
    h, wd, c = x.shape
    xp = np.pad(x, ((1, 1), (1, 1), (0, 0)))
    out = np.zeros_like(x)
    for a in range(3):
        for bb in range(3):
            out += xp[a : a + h, bb : bb + wd, :] * w[a, bb, 0, :]
    return out


def _np_softmax(z):
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def _np_window_attention(x, p: SubBlockParams):
    """Plain M x M window attention, s = 1, no shift; numpy throughout."""
    hgt, wid, c = x.shape
    m, h = p.m, p.heads
    d = c // h
    cs = p.cswa
    y = _np_layer_norm(x, p.ln1_g.data, p.ln1_b.data)
    q = _np_dw3(y, cs.w_q_dw.data) @ cs.w_q_pw.data
    k = _np_dw3(y, cs.w_k_dw.data) @ cs.w_k_pw.data
    v = _np_dw3(y, cs.w_v_dw.data) @ cs.w_v_pw.data
    table, index = cs.bias.table.data, cs.bias.index
    out = np.zeros_like(x)
    for wr in range(hgt // m):
        for wc in range(wid // m):
            sl = (slice(wr * m, wr * m + m), slice(wc * m, wc * m + m))
            qw = q[sl].reshape(m * m, c)
            kw = k[sl].reshape(m * m, c)
            vw = v[sl].reshape(m * m, c)
            mixed = np.zeros_like(qw)
            for head in range(h):
                cols = slice(head * d, (head + 1) * d)
                logits = qw[:, cols] @ kw[:, cols].T / np.sqrt(d)
                logits = logits + table[:, head][index]
                mixed[:, cols] = _np_softmax(logits) @ vw[:, cols]
            out[sl] = mixed.reshape(m, m, c)
    return out @ cs.w_out.data + cs.b_out.data + x


# -- individual checks ---------------------------------------------------------------


def _check_rng_reference():
    _, first = splitmix64(0)
    if first != 0xE220A8397B1DCDAF:
        return False, f"splitmix64(0) produced {first:#x}"
    draws = Rng(123).bulk_trunc_normal(4096, std=0.02)
    if np.abs(draws).max() > 0.04 + 1e-12:
        return False, "truncated normal exceeded 2 sigma"
    u = Rng(7).bulk_uniform(4096)
    if u.min() < 0.0 or u.max() >= 1.0:
        return False, "uniform draws left [0, 1)"
    return True, ""


def _check_grad_ops(precision):
    dtype = _DTYPES[precision]
    rng = Rng(11)
    x = _rand(rng, (3, 5), dtype)
    w = _rand(rng, (5, 4), dtype)
    b = _rand(rng, (4,), dtype)
    g = Tensor(np.ones(4, dtype=dtype), requires_grad=True)
    bb = Tensor(np.zeros(4, dtype=dtype), requires_grad=True)

    def make_loss():
        h = T.gelu(T.linear(x, w, b))
        h = T.layer_norm(h, g, bb, eps=1e-5)
        h = T.softmax(h, axis=-1)
        return T.reduce_mean(T.mul(h, h))

    rep = gradcheck(make_loss, {"x": x, "w": w, "b": b, "g": g}, seed=5, **_GC_SETTINGS[precision])
    return rep.ok, f"worst ratio {rep.worst_ratio:.3g}" if not rep.ok else ""


def _check_grad_conv(precision):
    dtype = _DTYPES[precision]
    rng = Rng(21)
    x = _rand(rng, (2, 6, 6, 4), dtype)
    w = _rand(rng, (3, 3, 4, 6), dtype)
    wd = _rand(rng, (3, 3, 1, 4), dtype)

    def make_loss():
        y = T.conv2d(x, w, None, padding=1)
        y = T.avg_pool2d(y, 2, 2)
        z = npconv(x, wd)
        z = T.pixel_shuffle_up(T.pixel_shuffle_down(z, 2), 2)
        return T.add(T.reduce_mean(T.mul(y, y)), T.reduce_mean(T.abs_(z)))

    rep = gradcheck(make_loss, {"x": x, "w": w, "wd": wd}, seed=6, **_GC_SETTINGS[precision])
    return rep.ok, f"worst ratio {rep.worst_ratio:.3g}" if not rep.ok else ""


def _check_grad_cswa(precision):
    dtype = _DTYPES[precision]
    rng = Rng(31)
    p = _random_sub_block(rng, c=8, h=2, m=4, ratio=2, dtype=dtype, shifted=True, with_isca=False)
    x = _rand(rng, (1, 8, 8, 8), dtype)

    def make_loss():
        out = cswa_forward(x, p)
        return T.reduce_mean(T.mul(out, out))

    wrt = {
        "x": x,
        "q_pw": p.cswa.w_q_pw,
        "ds": p.cswa.w_ds,
        "bias": p.cswa.bias.table,
        "ln_g": p.ln1_g,
    }
    rep = gradcheck(make_loss, wrt, seed=7, **_GC_SETTINGS[precision])
    return rep.ok, f"worst ratio {rep.worst_ratio:.3g}" if not rep.ok else ""


def _check_grad_isca(precision):
    dtype = _DTYPES[precision]
    rng = Rng(41)
    p = _random_sub_block(rng, c=8, h=2, m=4, ratio=1, dtype=dtype)
    x = _rand(rng, (1, 4, 4, 8), dtype)

    def make_loss():
        out = isca_forward(x, p)
        return T.reduce_mean(T.mul(out, out))

    wrt = {"x": x, "tau": p.isca.tau, "q_pw": p.isca.w_q_pw, "v_dw": p.isca.w_v_dw}
    rep = gradcheck(make_loss, wrt, seed=8, **_GC_SETTINGS[precision])
    return rep.ok, f"worst ratio {rep.worst_ratio:.3g}" if not rep.ok else ""


def _check_grad_fefn(precision):
    dtype = _DTYPES[precision]
    rng = Rng(51)
    p = _random_sub_block(rng, c=6, h=2, m=2, ratio=1, dtype=dtype)
    x1 = _rand(rng, (2, 3, 4, 6), dtype)
    x2 = _rand(rng, (2, 3, 4, 6), dtype)

    def make_loss():
        out = fefn_forward(x1, x2, p)
        return T.reduce_mean(T.mul(out, out))

    wrt = {"x1": x1, "x2": x2, "w1": p.fefn.w1, "w2": p.fefn.w2, "w_p": p.fefn.w_p}
    rep = gradcheck(make_loss, wrt, seed=9, **_GC_SETTINGS[precision])
    return rep.ok, f"worst ratio {rep.worst_ratio:.3g}" if not rep.ok else ""


def _check_grad_sub_block(precision):
    dtype = _DTYPES[precision]
    rng = Rng(61)
    p = _random_sub_block(rng, c=8, h=2, m=4, ratio=2, dtype=dtype, shifted=True)
    x = _rand(rng, (1, 8, 8, 8), dtype)

    def make_loss():
        out = sub_block_forward(x, p)
        return T.reduce_mean(T.mul(out, out))

    wrt = {"x": x, "fefn_w_p": p.fefn.w_p, "isca_out": p.isca.w_out, "cswa_out": p.cswa.w_out}
    rep = gradcheck(make_loss, wrt, seed=10, **_GC_SETTINGS[precision])
    return rep.ok, f"worst ratio {rep.worst_ratio:.3g}" if not rep.ok else ""


def _check_grad_efcr(precision):
    dtype = _DTYPES[precision]
    rng = Rng(71)
    i_out = _rand(rng, (6, 6, 3), dtype, scale=0.3)
    i_gt = _rand(rng, (6, 6, 3), dtype, scale=0.3, grad=False)
    i_in = _rand(rng, (6, 6, 3), dtype, scale=0.3, grad=False)
    b_in = _rand(rng, (6, 6, 3), dtype, scale=0.3, grad=False)
    b_out = _rand(rng, (6, 6, 3), dtype, scale=0.3, grad=False)

    def make_loss():
        cb = ContrastiveBatch(i_gt=i_gt, i_in=i_in, i_out=i_out, b_in=b_in, b_out=b_out)
        pos, neg = cr_basic(cb)
        terms = efcr_total(T.l1_distance(i_out, i_gt), [(pos, neg, cr_extended(cb))], beta=0.1)
        return terms.total

    rep = gradcheck(make_loss, {"i_out": i_out}, seed=11, **_GC_SETTINGS[precision])
    return rep.ok, f"worst ratio {rep.worst_ratio:.3g}" if not rep.ok else ""


def _check_haar():
    rng = Rng(81)
    x = Tensor(rng.bulk_normal(8 * 8 * 3).reshape(8, 8, 3).astype(np.float32))
    bands = haar_dwt(x)
    back = haar_idwt(bands)
    err = np.abs(back.data - x.data).max()
    if err > 1e-6:
        return False, f"roundtrip error {err:.3g}"
    e_in = float((x.data.astype(np.float64) ** 2).sum())
    e_out = sum(
        float((t.data.astype(np.float64) ** 2).sum())
        for t in (bands.ll, bands.lh, bands.hl, bands.hh)
    )
    if abs(e_in - e_out) > 1e-5 * e_in:
        return False, f"energy drift {abs(e_in - e_out):.3g}"
    block = Tensor(np.array([[1.0, 2.0], [3.0, 4.0]], dtype=np.float64).reshape(2, 2, 1))
    b = haar_dwt(block)
    got = (b.ll.item(), b.hl.item(), b.lh.item(), b.hh.item())
    if not np.allclose(got, (5.0, 1.0, 2.0, 0.0), atol=1e-12):
        return False, f"hand block gave {got}"
    return True, ""


def _check_windows():
    rng = Rng(91)
    x = Tensor(rng.bulk_normal(5 * 7 * 2).reshape(1, 5, 7, 2).astype(np.float32))
    wins, grid = window_partition(x, 4)
    back = window_merge(wins, grid)
    if not np.array_equal(back.data, x.data):
        return False, "partition/merge roundtrip not exact"
    y = cyclic_shift(x, 2)
    z = cyclic_shift(y, 2, inverse=True)
    if not np.array_equal(z.data, x.data):
        return False, "cyclic shift roundtrip not exact"
    return True, ""


def _check_cross_scale_counts():
    rng = Rng(101)
    xq = Tensor(rng.bulk_normal(16 * 16 * 2).reshape(1, 16, 16, 2).astype(np.float32))
    xk = Tensor(rng.bulk_normal(8 * 8 * 2).reshape(1, 8, 8, 2).astype(np.float32))
    _, gq = window_partition(xq, 4)
    _, gk = window_partition(xk, 4)
    idx = cross_scale_index(gq, gk, ScaleSpec(2))
    if idx.shape != (gq.count,):
        return False, f"index shape {idx.shape}"
    counts = np.bincount(idx, minlength=gk.count)
    if not np.array_equal(counts, np.full(gk.count, 4)):
        return False, f"reference counts {counts.tolist()}"
    for r in range(gq.rows):
        for c in range(gq.cols):
            if idx[r * gq.cols + c] != (r // 2) * gk.cols + (c // 2):
                return False, f"index mismatch at window ({r},{c})"
    return True, ""


def _check_wa_oracle():
    rng = Rng(111)
    worst = 0.0
    for trial in range(5):
        p = _random_sub_block(rng, c=8, h=2, m=4, ratio=1, dtype=np.float32, with_isca=False)
        x = _rand(rng, (8, 8, 8), np.float32, grad=False)
        got = cswa_forward(x, p).data
        want = _np_window_attention(x.data.astype(np.float64), p)
        worst = max(worst, float(np.abs(got - want).max()))
    return worst <= 1e-5, f"max abs error {worst:.3g}"


def _check_flop_invariance():
    base = None
    for ratio in (1, 2, 4):
        macs = cswa_attention_macs(32, 32, 16, heads=2, m=4, spec=ScaleSpec(ratio))
        rng = Rng(121)
        q = Tensor(rng.bulk_normal(32 * 32 * 16).reshape(1, 32, 32, 16).astype(np.float32))
        side = 32 // ratio
        k = Tensor(rng.bulk_normal(side * side * 16).reshape(1, side, side, 16).astype(np.float32))
        _, gq = window_partition(q, 4)
        kw, gk = window_partition(k, 4)
        idx = cross_scale_index(gq, gk, ScaleSpec(ratio))
        gathered = T.gather(kw, idx, axis=1)
        n, msq, c = gathered.shape[1], gathered.shape[2], gathered.shape[3]
        counted = 2 * 2 * n * msq * msq * (c // 2)  # heads * (qk^T + attn v)
        if counted != macs:
            return False, f"s=1/{ratio}: counted {counted} vs formula {macs}"
        if base is None:
            base = macs
        elif macs != base:
            return False, f"s=1/{ratio}: {macs} != {base}"
    return True, ""


def _footprint(ratio: int) -> tuple[np.ndarray, tuple]:
    c, m = 4, 4
    p = SubBlockParams(
        ln1_g=Tensor(np.ones(c, dtype=np.float32), requires_grad=True),
        ln1_b=Tensor(np.zeros(c, dtype=np.float32), requires_grad=True),
        ln2_g=None, ln2_b=None,
        cswa=_identity_cswa(c, m, np.float32, with_ds=ratio > 1),
        isca=None, fefn=None,
        heads=1, spec=ScaleSpec(ratio), shifted=False, m=m,
    )
    rng = Rng(131 + ratio)
    x = Tensor(rng.bulk_normal(16 * 16 * c).reshape(1, 16, 16, c).astype(np.float32),
               requires_grad=True)
    with Tape() as tape:
        out = cswa_forward(x, p)
        win = out[:, 4:8, 8:12, :]
        # squared loss: a channel-uniform gradient would be annihilated by
        # the layer-norm jacobian and hide the attention path entirely
        loss = T.reduce_sum(T.mul(win, win))
    tape.backward(loss)
    mask = np.any(x.grad != 0.0, axis=(0, 3))
    if ratio == 1:
        region = (slice(4, 8), slice(8, 12))
    else:
        region = (slice(0, 8), slice(8, 16))
    return mask, region


def _check_receptive_field():
    for ratio, span in ((1, 4), (2, 8)):
        mask, region = _footprint(ratio)
        inside = mask[region]
        outside = mask.copy()
        outside[region] = False
        if not inside.all():
            return False, f"s=1/{ratio}: only {int(inside.sum())}/{span * span} inside"
        if outside.any():
            return False, f"s=1/{ratio}: {int(outside.sum())} stray pixels outside"
    return True, ""


def _check_adamw():
    p = Tensor(np.array([1.0], dtype=np.float32), requires_grad=True)
    p.grad = np.array([1.0], dtype=np.float32)
    opt = AdamW({"p": p}, lr=0.1, weight_decay=0.0)
    opt.step()
    if abs(p.data[0] - 0.9) > 1e-6:
        return False, f"unit-gradient step moved to {p.data[0]}"
    q = Tensor(np.array([2.0], dtype=np.float32), requires_grad=True)
    q.grad = np.array([0.0], dtype=np.float32)
    opt2 = AdamW({"q": q}, lr=0.1, weight_decay=1e-4)
    opt2.step()
    if abs(q.data[0] - 2.0 * (1 - 1e-5)) > 1e-9:
        return False, f"decay-only step moved to {q.data[0]}"
    return True, ""


def _check_container():
    rng = Rng(141)
    entries = {
        "a": rng.bulk_normal(12).reshape(3, 4).astype(np.float32),
        "b": rng.bulk_normal(5).astype(np.float64),
    }
    meta = {"purpose": "selftest", "k": "v"}
    with tempfile.TemporaryDirectory() as tmp:
        path = os.path.join(tmp, "t.mptt")
        save_store(path, entries, meta)
        got, gmeta = load_store(path)
        for k in entries:
            if not np.array_equal(got[k], entries[k]) or got[k].dtype != entries[k].dtype:
                return False, f"entry {k} not bit-exact"
        if gmeta != meta:
            return False, "metadata mismatch"
        with open(path, "rb") as fh:
            blob = fh.read()
        with open(path, "wb") as fh:
            fh.write(blob[:-3])
        try:
            load_store(path)
            return False, "truncated store accepted"
        except FormatError:
            pass
    return True, ""


def _check_reblur():
    rng = Rng(151)
    const = np.full((10, 12, 3), 0.37, dtype=np.float32)
    out, k = gaussian_reblur(const, rng)
    if k not in (3, 5, 7):
        return False, f"kernel size {k}"
    if np.abs(out - const).max() > 1e-6:
        return False, "constant image changed"
    img = rng.bulk_normal(16 * 16 * 3).reshape(16, 16, 3).astype(np.float32)
    blurred, _ = gaussian_reblur(img, rng)
    hi_before = np.abs(f_high(Tensor(img)).data).mean()
    hi_after = np.abs(f_high(Tensor(blurred)).data).mean()
    if hi_after >= hi_before:
        return False, "blur failed to attenuate detail bands"
    return True, ""


def _check_metrics():
    rng = Rng(161)
    a = rng.bulk_uniform(24 * 24 * 3).reshape(24, 24, 3) * 0.8
    if psnr(a, a) != 100.0:
        return False, "identical images not capped at 100 dB"
    if abs(psnr(a, a + 0.1) - 20.0) > 1e-9:
        return False, f"offset 0.1 gave {psnr(a, a + 0.1)}"
    if abs(ssim(a, a) - 1.0) > 1e-12:
        return False, "self SSIM != 1"
    img = rng.bulk_uniform(32 * 32 * 3).reshape(32, 32, 3)
    nad = attention_distance(img, 4)
    if not 0.0 <= nad <= 1.0:
        return False, f"nad {nad} out of range"
    if attention_distance(img, 1) != 0.0:
        return False, "P=1 must return 0"
    return True, ""


def run_selftest(precision: str = "f32", log_fn=print) -> int:
    """Run every check; prints one PASS/FAIL line each, returns failure count."""
    if precision not in SELFTEST_PRECISIONS:
        raise ValueError(f"precision must be one of {SELFTEST_PRECISIONS}")
    checks = [
        ("rng.reference", _check_rng_reference),
        (f"grad.ops.{precision}", lambda: _check_grad_ops(precision)),
        (f"grad.conv.{precision}", lambda: _check_grad_conv(precision)),
        (f"grad.cswa.{precision}", lambda: _check_grad_cswa(precision)),
        (f"grad.isca.{precision}", lambda: _check_grad_isca(precision)),
        (f"grad.fefn.{precision}", lambda: _check_grad_fefn(precision)),
        (f"grad.sub_block.{precision}", lambda: _check_grad_sub_block(precision)),
        (f"grad.efcr.{precision}", lambda: _check_grad_efcr(precision)),
        ("haar.roundtrip", _check_haar),
        ("windows.roundtrip", _check_windows),
        ("windows.cross_scale_counts", _check_cross_scale_counts),
        ("cswa.window_oracle", _check_wa_oracle),
        ("flops.scale_invariance", _check_flop_invariance),
        ("cswa.receptive_field", _check_receptive_field),
        ("optim.adamw_reference", _check_adamw),
        ("formats.container_roundtrip", _check_container),
        ("freq.reblur", _check_reblur),
        ("metrics.sanity", _check_metrics),
    ]
    failures = 0
    for name, fn in checks:
        try:
            ok, detail = fn()
        except Exception as exc:  # a crash is a failure, not an abort
            ok, detail = False, f"{type(exc).__name__}: {exc}"
        if ok:
            log_fn(f"PASS {name}")
        else:
            failures += 1
            log_fn(f"FAIL {name}: {detail}")
    return failures
