"""High-precision reference values for the dielectric and channel unit tests.

Evaluates the closed-form permittivity models and the loss/noise chain with
mpmath at 50 significant digits. The C++ tests freeze the printed values.
"""
from mpmath import mp, mpf, mpc, sqrt, pi, log10, e, exp

mp.dps = 50
C0 = mpf(299792458)
EPS0 = mpf("8.8541878128e-12")
KB = mpf("1.380649e-23")


def double_debye(f, eps_inf, e1, e2, t1, t2):
    w = 2 * pi * f
    j = mpc(0, 1)
    return eps_inf + (e1 - e2) / (1 + j * w * t1) + (e2 - eps_inf) / (1 + j * w * t2)


def havriliak_negami(f, eps_inf, terms, sigma):
    w = 2 * pi * f
    j = mpc(0, 1)
    v = mpc(eps_inf, 0)
    for eps_i, tau, a, b in terms:
        v += eps_i / (1 + (j * w * tau) ** a) ** b
    return v - j * sigma / (w * EPS0)


blood = lambda f: double_debye(f, mpf("2.1"), mpf(130), mpf("3.8"), mpf("14.4e-12"), mpf("0.1e-12"))
dermis = lambda f: havriliak_negami(
    f, mpf(4), [(mpf("5.96"), mpf("1.6e-12"), mpf("0.92"), mpf("0.8")),
                (mpf("380.4"), mpf("159e-9"), mpf("0.97"), mpf("0.99"))], mpf("0.1"))
epidermis = lambda f: havriliak_negami(
    f, mpf(3), [(mpf("89.61"), mpf("15.9e-12"), mpf("0.95"), mpf("0.96"))], mpf(0))


def optics(eps, f):
    n = sqrt(eps)
    nr, ni = n.real, abs(n.imag)
    lam_g = C0 / f / nr
    return nr, ni, lam_g, 4 * pi * ni / lam_g


def layer_loss(model, f, d):
    _, _, lam_g, mu = optics(model(f), f)
    return 20 * log10(4 * pi * d / lam_g), 10 * log10(e) * mu * d


f = mpf("0.5e12")
eps = dermis(f)
print("dermis eps_r @0.5THz", mp.nstr(eps.real, 17), mp.nstr(eps.imag, 17))
eps = blood(f)
print("blood eps_r @0.5THz", mp.nstr(eps.real, 17), mp.nstr(eps.imag, 17))
print("blood mu_abs @0.5THz", mp.nstr(optics(blood(f), f)[3], 17))
for d in ("0.5e-3", "1.0e-3", "2.0e-3"):
    s, a = layer_loss(blood, f, mpf(d))
    print("blood loss d=%s" % d, mp.nstr(s, 17), mp.nstr(a, 17))
stack = [(epidermis, mpf("200e-6")), (dermis, mpf("1800e-6")), (blood, mpf("500e-6"))]
tot_s = tot_a = mpf(0)
expo = mpf(0)
for m, d in stack:
    s, a = layer_loss(m, f, d)
    tot_s += s
    tot_a += a
    expo += 4 * pi * f * d * optics(m(f), f)[1] / C0
print("default stack @0.5THz spread/abs/total", mp.nstr(tot_s, 17), mp.nstr(tot_a, 17), mp.nstr(tot_s + tot_a, 17))
print("default stack noise psd @0.5THz", mp.nstr(KB * 310 * (1 - exp(-expo)), 17))
eps = epidermis(f)
print("epidermis eps_r @0.5THz", mp.nstr(eps.real, 17), mp.nstr(eps.imag, 17))
p_rb = 10 * log10(mpf(5000)) + 2 * 10 * log10(mpf("5.09")) - 2 * (tot_s + tot_a)
print("default stack P_RB dBW @0.5THz", mp.nstr(p_rb, 17))
