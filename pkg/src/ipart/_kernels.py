"""Compiled sampler core.

State layout (per time slice t): ``lab[t, i]`` holds a 0-based cluster id in
``0..k[t]-1``; ``cnt``, ``mu`` and ``sig`` are indexed by cluster id with spare
capacity for auxiliary components. ``gam[t, i] == 1`` marks a unit whose
grouping with the other fixed units must match the center partition.

Randomness comes from numba's internal generator; call :func:`seed` first.
"""
from __future__ import annotations

import math

import numpy as np
from numba import njit

LOG_2PI = math.log(2.0 * math.pi)
LN2 = math.log(2.0)

# integer config slots
I_T, I_M, I_CAP, I_NAUX, I_PRIOR, I_MARKOV, I_INFORMED, I_AFIXED, I_FLAT, I_SIGFIX, I_THFIX, I_TAUFIX, I_NB = range(13)
# float config slots
F_M, F_PSI, F_NU, F_ASIG, F_ATAU, F_ALAM, F_M0, F_S02, F_SIG, F_THETA, F_TAU = range(11)

PRIOR_ICRP, PRIOR_CPP, PRIOR_LSP = 0, 1, 2


@njit(cache=True)
def seed(s):
    np.random.seed(s)


@njit(cache=True)
def norm_logpdf(x, mu, s):
    z = (x - mu) / s
    return -0.5 * LOG_2PI - math.log(s) - 0.5 * z * z


@njit(cache=True)
def _scale_logdens(x, n, ss):
    # sigma^-n exp(-ss / (2 sigma^2)): a normal scale with n observations and
    # sum of squared deviations ss under a flat prior
    if x <= 0.0:
        return -np.inf
    return -n * math.log(x) - 0.5 * ss / (x * x)


@njit(cache=True)
def slice_scale(x0, n, ss, upper, w):
    """One stepping-out/shrinkage slice update on (0, upper)."""
    ly = _scale_logdens(x0, n, ss) - np.random.exponential(1.0)
    left = x0 - w * np.random.random()
    right = left + w
    steps = 0
    while left > 0.0 and _scale_logdens(left, n, ss) > ly and steps < 200:
        left -= w
        steps += 1
    steps = 0
    while right < upper and _scale_logdens(right, n, ss) > ly and steps < 200:
        right += w
        steps += 1
    if left < 0.0:
        left = 0.0
    if right > upper:
        right = upper
    for _ in range(1000):
        x1 = left + (right - left) * np.random.random()
        if x1 > 0.0 and x1 < upper and _scale_logdens(x1, n, ss) > ly:
            return x1
        if x1 < x0:
            left = x1
        else:
            right = x1
    return x0


@njit(cache=True)
def _xlog2x(n):
    if n <= 0:
        return 0.0
    return n * math.log(n) / LN2


@njit(cache=True)
def _categorical(lw, n):
    mx = -np.inf
    for j in range(n):
        if lw[j] > mx:
            mx = lw[j]
    tot = 0.0
    for j in range(n):
        if lw[j] > -np.inf:
            lw[j] = math.exp(lw[j] - mx)
        else:
            lw[j] = 0.0
        tot += lw[j]
    u = np.random.random() * tot
    acc = 0.0
    last = -1
    for j in range(n):
        if lw[j] > 0.0:
            last = j
            acc += lw[j]
            if u < acc:
                return j
    return last


@njit(cache=True)
def _base_draw(t, theta, tau, icfg, fcfg):
    mu = theta[t] + tau[t] * np.random.standard_normal()
    if icfg[I_SIGFIX]:
        sg = fcfg[F_SIG]
    else:
        sg = fcfg[F_ASIG] * np.random.random()
        while sg <= 0.0:
            sg = fcfg[F_ASIG] * np.random.random()
    return mu, sg


@njit(cache=True)
def lsp_logprob(labs, c0, nu):
    """Sequential LSP log mass of ``labs`` (arbitrary ids) given 0-based canonical ``c0``."""
    m = labs.shape[0]
    remap = np.full(2 * m + 2, -1, np.int64)
    can = np.empty(m, np.int64)
    nxt = 0
    for i in range(m):
        c = labs[i]
        if remap[c] < 0:
            remap[c] = nxt
            nxt += 1
        can[i] = remap[c]
    nk = np.zeros(m + 1, np.int64)
    cross = np.zeros((m + 1, m + 1), np.int64)
    nk[can[0]] += 1
    cross[can[0], c0[0]] += 1
    K = 1
    K0 = 1
    total = 0.0
    for i in range(1, m):
        ci0 = c0[i]
        tot = 0.0
        wsel = 0.0
        for k in range(K):
            w = (nu + cross[k, ci0]) / (nu * K0 + nu + nk[k])
            tot += w
            if k == can[i]:
                wsel = w
        newv = 1.0 if ci0 == K0 else 0.0
        w = (nu + newv) / (nu * K0 + nu + 1.0)
        tot += w
        if can[i] == K:
            wsel = w
            K += 1
        total += math.log(wsel / tot)
        nk[can[i]] += 1
        cross[can[i], ci0] += 1
        if ci0 + 1 > K0:
            K0 = ci0 + 1
    return total


@njit(cache=True)
def _remove_cluster(t, j0, lab, cnt, mu, sig, k, ct, use_ct, m):
    last = k[t] - 1
    if j0 != last:
        for u in range(m):
            if lab[t, u] == last:
                lab[t, u] = j0
        cnt[t, j0] = cnt[t, last]
        mu[t, j0] = mu[t, last]
        sig[t, j0] = sig[t, last]
        if use_ct:
            for l in range(ct.shape[1]):
                ct[j0, l] = ct[last, l]
                ct[last, l] = 0
    cnt[t, last] = 0
    k[t] -= 1


@njit(cache=True)
def alloc_pass(y, lab, k, cnt, mu, sig, gam, theta, tau, c0, ct, icfg, fcfg):
    """Resample every free allocation once (Algorithm-8 auxiliary components)."""
    T = icfg[I_T]
    m = icfg[I_M]
    naux = icfg[I_NAUX]
    kind = icfg[I_PRIOR]
    markov = icfg[I_MARKOV] != 0
    flat = icfg[I_FLAT] != 0
    M = fcfg[F_M]
    psi = fcfg[F_PSI]
    nu = fcfg[F_NU]
    use_ct = kind == PRIOR_CPP
    cap = cnt.shape[1]
    lw = np.empty(cap + naux)
    aux_mu = np.empty(naux)
    aux_sig = np.empty(naux)
    forbidden = np.zeros(cap, np.bool_)
    for t in range(T):
        for i in range(m):
            if gam[t, i] != 0:
                continue
            yi = y[t, i]
            j0 = lab[t, i]
            cnt[t, j0] -= 1
            if use_ct:
                ct[j0, c0[i]] -= 1
            start = 0
            was_single = cnt[t, j0] == 0
            if was_single:
                aux_mu[0] = mu[t, j0]
                aux_sig[0] = sig[t, j0]
                start = 1
                lab[t, i] = -1
                _remove_cluster(t, j0, lab, cnt, mu, sig, k, ct, use_ct, m)
            else:
                lab[t, i] = -1
            for a in range(start, naux):
                aux_mu[a], aux_sig[a] = _base_draw(t, theta, tau, icfg, fcfg)
            kt = k[t]
            # forward compatibility with the next slice (Markovian centering)
            forced = -1
            newok = True
            for j in range(kt):
                forbidden[j] = False
            if markov and t + 1 < T and gam[t + 1, i] == 1:
                for l in range(m):
                    if l != i and gam[t + 1, l] == 1:
                        if lab[t + 1, l] == lab[t + 1, i]:
                            forced = lab[t, l]
                        else:
                            forbidden[lab[t, l]] = True
                newok = forced < 0
            for j in range(kt):
                if (forced >= 0 and j != forced) or forbidden[j]:
                    lw[j] = -np.inf
                    continue
                v = math.log(cnt[t, j])
                if not flat:
                    v += norm_logpdf(yi, mu[t, j], sig[t, j])
                if use_ct:
                    nj = cnt[t, j]
                    njl = ct[j, c0[i]]
                    dvi = (_xlog2x(nj + 1) - _xlog2x(nj) - 2.0 * (_xlog2x(njl + 1) - _xlog2x(njl))) / m
                    v -= psi * dvi
                lw[j] = v
            lnew = math.log(M / naux)
            for a in range(naux):
                if newok:
                    v = lnew
                    if not flat:
                        v += norm_logpdf(yi, aux_mu[a], aux_sig[a])
                    lw[kt + a] = v
                else:
                    lw[kt + a] = -np.inf
            if kind == PRIOR_LSP:
                # independence proposal from the likelihood, accepted on the prior ratio
                for j in range(kt):
                    if lw[j] > -np.inf:
                        lw[j] = 0.0 if flat else norm_logpdf(yi, mu[t, j], sig[t, j])
                for a in range(naux):
                    lw[kt + a] = -math.log(naux) + (0.0 if flat else norm_logpdf(yi, aux_mu[a], aux_sig[a]))
                prop = _categorical(lw, kt + naux)
                # current partition: i back in its old cluster (or alone)
                if was_single:
                    lab[t, i] = kt
                else:
                    lab[t, i] = j0
                lp_cur = lsp_logprob(lab[t], c0, nu)
                lab[t, i] = prop if prop < kt else kt
                lp_new = lsp_logprob(lab[t], c0, nu)
                if math.log(np.random.random()) >= lp_new - lp_cur:
                    prop = j0 if not was_single else kt  # reject: keep aux slot 0 params
            else:
                prop = _categorical(lw, kt + naux)
            if prop < kt:
                lab[t, i] = prop
                cnt[t, prop] += 1
                if use_ct:
                    ct[prop, c0[i]] += 1
            else:
                a = prop - kt
                lab[t, i] = kt
                cnt[t, kt] = 1
                mu[t, kt] = aux_mu[a]
                sig[t, kt] = aux_sig[a]
                if use_ct:
                    ct[kt, c0[i]] += 1
                k[t] = kt + 1


@njit(cache=True)
def gamma_active(t, icfg):
    if icfg[I_PRIOR] != PRIOR_ICRP:
        return False
    if icfg[I_INFORMED]:
        return True
    return icfg[I_MARKOV] != 0 and t > 0


@njit(cache=True)
def gamma_pass(lab, gam, c0, alpha, blk, icfg, fcfg):
    """Resample each reallocation indicator from its full conditional."""
    T = icfg[I_T]
    m = icfg[I_M]
    markov = icfg[I_MARKOV] != 0
    M = fcfg[F_M]
    for t in range(T):
        if not gamma_active(t, icfg):
            continue
        for i in range(m):
            a = alpha[blk[t, i]]
            r = 0
            nsame = 0
            ok = True
            for l in range(m):
                if l == i or gam[t, l] == 0:
                    continue
                r += 1
                if markov and t > 0:
                    same_c = lab[t - 1, l] == lab[t - 1, i]
                else:
                    same_c = c0[l] == c0[i]
                same_r = lab[t, l] == lab[t, i]
                if same_c:
                    nsame += 1
                if same_c != same_r:
                    ok = False
            pred = (nsame if nsame > 0 else M) / (M + r)
            w1 = a / pred if ok else 0.0
            w0 = 1.0 - a
            if w1 + w0 <= 0.0:
                continue
            gam[t, i] = 1 if np.random.random() * (w1 + w0) < w1 else 0


@njit(cache=True)
def alpha_pass(gam, alpha, blk, a_hyp, b_hyp, icfg):
    T = icfg[I_T]
    m = icfg[I_M]
    nb = alpha.shape[0]
    succ = np.zeros(nb)
    n = np.zeros(nb)
    for t in range(T):
        if not gamma_active(t, icfg):
            continue
        for i in range(m):
            b = blk[t, i]
            succ[b] += gam[t, i]
            n[b] += 1.0
    for b in range(nb):
        alpha[b] = np.random.beta(a_hyp[b] + succ[b], b_hyp[b] + n[b] - succ[b])


@njit(cache=True)
def param_pass(y, lab, k, cnt, mu, sig, theta, tau, glob, icfg, fcfg):
    """Gibbs/slice sweep over cluster means and scales and the hierarchy above them."""
    T = icfg[I_T]
    m = icfg[I_M]
    flat = icfg[I_FLAT] != 0
    A_sig = fcfg[F_ASIG]
    A_tau = fcfg[F_ATAU]
    cap = cnt.shape[1]
    sy = np.zeros(cap)
    for t in range(T):
        kt = k[t]
        for j in range(kt):
            sy[j] = 0.0
        if not flat:
            for i in range(m):
                sy[lab[t, i]] += y[t, i]
        tau2 = tau[t] * tau[t]
        for j in range(kt):
            n = 0 if flat else cnt[t, j]
            s2 = sig[t, j] * sig[t, j]
            prec = n / s2 + 1.0 / tau2
            mean = (sy[j] / s2 + theta[t] / tau2) / prec
            mu[t, j] = mean + np.random.standard_normal() / math.sqrt(prec)
        if icfg[I_SIGFIX]:
            for j in range(kt):
                sig[t, j] = fcfg[F_SIG]
        else:
            for j in range(kt):
                ss = 0.0
                n = 0
                if not flat:
                    for i in range(m):
                        if lab[t, i] == j:
                            d = y[t, i] - mu[t, j]
                            ss += d * d
                            n += 1
                sig[t, j] = slice_scale(sig[t, j], n, ss, A_sig, A_sig / 4.0)
        if not icfg[I_THFIX]:
            if T > 1:
                pm, pv = glob[0], glob[1] * glob[1]
            else:
                pm, pv = fcfg[F_M0], fcfg[F_S02]
            smu = 0.0
            for j in range(kt):
                smu += mu[t, j]
            prec = kt / tau2 + 1.0 / pv
            mean = (smu / tau2 + pm / pv) / prec
            theta[t] = mean + np.random.standard_normal() / math.sqrt(prec)
        if not icfg[I_TAUFIX]:
            ss = 0.0
            for j in range(kt):
                d = mu[t, j] - theta[t]
                ss += d * d
            tau[t] = slice_scale(tau[t], kt, ss, A_tau, A_tau / 10.0)
    if T > 1 and not icfg[I_THFIX]:
        lam2 = glob[1] * glob[1]
        s02 = fcfg[F_S02]
        st = 0.0
        for t in range(T):
            st += theta[t]
        prec = T / lam2 + 1.0 / s02
        mean = (st / lam2 + fcfg[F_M0] / s02) / prec
        glob[0] = mean + np.random.standard_normal() / math.sqrt(prec)
        ss = 0.0
        for t in range(T):
            d = theta[t] - glob[0]
            ss += d * d
        A_lam = fcfg[F_ALAM]
        glob[1] = slice_scale(glob[1], T, ss, A_lam, A_lam / 10.0)


@njit(cache=True)
def canon_pass(lab, k, cnt, mu, sig, ct, use_ct):
    """Relabel each slice by first appearance and permute the cluster arrays to match."""
    T, m = lab.shape
    cap = cnt.shape[1]
    remap = np.empty(cap, np.int64)
    ncnt = np.empty(cap, np.int64)
    nmu = np.empty(cap)
    nsig = np.empty(cap)
    for t in range(T):
        for j in range(cap):
            remap[j] = -1
        nxt = 0
        for i in range(m):
            c = lab[t, i]
            if remap[c] < 0:
                remap[c] = nxt
                nxt += 1
        for j in range(k[t]):
            r = remap[j]
            ncnt[r] = cnt[t, j]
            nmu[r] = mu[t, j]
            nsig[r] = sig[t, j]
        for j in range(k[t]):
            cnt[t, j] = ncnt[j]
            mu[t, j] = nmu[j]
            sig[t, j] = nsig[j]
        if use_ct:
            tmp = ct.copy()
            for j in range(k[t]):
                for l in range(ct.shape[1]):
                    ct[remap[j], l] = tmp[j, l]
        for i in range(m):
            lab[t, i] = remap[lab[t, i]]


@njit(cache=True)
def _crp_restricted_logmass(lab_t, center, gam_t, M, m):
    # log CRP EPPF of ``center`` restricted to units with gam_t == 1
    sizes = np.zeros(m + 1, np.int64)
    seen = np.full(2 * m + 2, -1, np.int64)
    nk = 0
    r = 0
    tot = 0.0
    for i in range(m):
        if gam_t[i] == 0:
            continue
        c = center[i]
        if seen[c] < 0:
            seen[c] = nk
            nk += 1
            tot += math.log(M / (M + r))
        else:
            tot += math.log(sizes[seen[c]] / (M + r))
        sizes[seen[c]] += 1
        r += 1
    return tot


@njit(cache=True)
def _crp_logeppf(k, cnt_t, M, m):
    tot = k * math.log(M)
    for j in range(k):
        tot += math.lgamma(cnt_t[j])
    for i in range(m):
        tot -= math.log(M + i)
    return tot


@njit(cache=True)
def log_joint(y, lab, k, cnt, mu, sig, gam, theta, tau, glob, c0, alpha, blk, icfg, fcfg):
    """Unnormalized log posterior of the current state (uniform-prior terms omitted)."""
    T = icfg[I_T]
    m = icfg[I_M]
    kind = icfg[I_PRIOR]
    markov = icfg[I_MARKOV] != 0
    M = fcfg[F_M]
    tot = 0.0
    if icfg[I_FLAT] == 0:
        for t in range(T):
            for i in range(m):
                j = lab[t, i]
                tot += norm_logpdf(y[t, i], mu[t, j], sig[t, j])
    for t in range(T):
        for j in range(k[t]):
            tot += norm_logpdf(mu[t, j], theta[t], tau[t])
        if kind == PRIOR_ICRP:
            tot += _crp_logeppf(k[t], cnt[t], M, m)
            if gamma_active(t, icfg):
                center = lab[t - 1] if (markov and t > 0) else c0
                tot -= _crp_restricted_logmass(lab[t], center, gam[t], M, m)
                for i in range(m):
                    a = alpha[blk[t, i]]
                    if gam[t, i] == 1:
                        tot += math.log(a) if a > 0 else -np.inf
                    else:
                        tot += math.log1p(-a) if a < 1 else -np.inf
        elif kind == PRIOR_CPP:
            tot += _crp_logeppf(k[t], cnt[t], M, m)
            tot -= fcfg[F_PSI] * _vi_bits(lab[t], c0, m)
        else:
            tot += lsp_logprob(lab[t], c0, fcfg[F_NU])
    if not icfg[I_THFIX]:
        if T > 1:
            for t in range(T):
                tot += norm_logpdf(theta[t], glob[0], glob[1])
            tot += norm_logpdf(glob[0], fcfg[F_M0], math.sqrt(fcfg[F_S02]))
        else:
            tot += norm_logpdf(theta[0], fcfg[F_M0], math.sqrt(fcfg[F_S02]))
    return tot


@njit(cache=True)
def _vi_bits(a, b, m):
    ka = 0
    kb = 0
    for i in range(m):
        if a[i] + 1 > ka:
            ka = a[i] + 1
        if b[i] + 1 > kb:
            kb = b[i] + 1
    na = np.zeros(ka, np.int64)
    nb = np.zeros(kb, np.int64)
    nab = np.zeros((ka, kb), np.int64)
    for i in range(m):
        na[a[i]] += 1
        nb[b[i]] += 1
        nab[a[i], b[i]] += 1
    tot = 0.0
    for j in range(ka):
        tot += _xlog2x(na[j])
    for j in range(kb):
        tot += _xlog2x(nb[j])
    for j in range(ka):
        for l in range(kb):
            tot -= 2.0 * _xlog2x(nab[j, l])
    return tot / m


@njit(cache=True)
def run(y, lab, k, cnt, mu, sig, gam, theta, tau, glob, c0, ct, alpha, blk, a_hyp, b_hyp,
        icfg, fcfg, n_iter, burnin, thin, rec_lab, rec_alpha, rec_ll, rec_lp, rec_ngam):
    """Full sweeps: allocations, indicators, alpha, cluster parameters; record on the thinning grid."""
    T = icfg[I_T]
    m = icfg[I_M]
    kind = icfg[I_PRIOR]
    use_ct = kind == PRIOR_CPP
    b = 0
    for it in range(n_iter):
        alloc_pass(y, lab, k, cnt, mu, sig, gam, theta, tau, c0, ct, icfg, fcfg)
        if kind == PRIOR_ICRP:
            gamma_pass(lab, gam, c0, alpha, blk, icfg, fcfg)
            if not icfg[I_AFIXED]:
                alpha_pass(gam, alpha, blk, a_hyp, b_hyp, icfg)
        param_pass(y, lab, k, cnt, mu, sig, theta, tau, glob, icfg, fcfg)
        canon_pass(lab, k, cnt, mu, sig, ct, use_ct)
        if it >= burnin and (it - burnin + 1) % thin == 0:
            for t in range(T):
                ng = 0
                for i in range(m):
                    j = lab[t, i]
                    rec_lab[b, t, i] = j + 1
                    rec_ll[b, t, i] = norm_logpdf(y[t, i], mu[t, j], sig[t, j])
                    ng += gam[t, i]
                rec_ngam[b, t] = ng
            for q in range(alpha.shape[0]):
                rec_alpha[b, q] = alpha[q]
            rec_lp[b] = log_joint(y, lab, k, cnt, mu, sig, gam, theta, tau, glob, c0, alpha, blk, icfg, fcfg)
            b += 1
    return b
