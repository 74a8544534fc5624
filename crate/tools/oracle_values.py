# Independent high-precision oracle values (mpmath, 50 digits).
from mpmath import mp, mpf, exp, log, power, ceil
mp.dps = 50
def H2(p):
    p = mpf(p)
    if p == 0 or p == 1: return mpf(0)
    return -p*log(p,2) - (1-p)*log(1-p,2)
print("t(6.5dB)", power(10, mpf(-6.5)/10))
print("multi(0.5)", 1-exp(-mpf('0.5'))*(1+mpf('0.5')))
print("multi(7)", 1-exp(-mpf(7))*8)
print("gain eta=.01 x=.5", 1-exp(-mpf('0.005')))
print("errgain", mpf('0.01')*(1-exp(-mpf('0.005'))))
print("H2(0.035)", H2(mpf('0.035')))
print("m", ceil(10**4*mpf('1.2')*H2(mpf('0.035'))))
print("f_actual", 2627/(10**4*H2(mpf('0.035'))))
eta, y0, edet = mpf('0.01'), mpf(0), mpf('0.01')
mu, n1, n2 = mpf('0.5'), mpf('0.1'), mpf('0.005')
Q = lambda x: y0 + (1-y0)*(1-exp(-eta*x))
EQ = lambda x: mpf('0.5')*y0 + edet*(1-exp(-eta*x))
y0L = max((n1*EQ(n2)*exp(n2) - n2*EQ(n1)*exp(n1))/(n1-n2), 0)
Y1L = mu/(mu*(n1-n2)-n1**2+n2**2)*(Q(n1)*exp(n1)-Q(n2)*exp(n2)-(n1**2-n2**2)/mu**2*(Q(mu)*exp(mu)-y0L))
e1U = (EQ(n1)*exp(n1)-EQ(n2)*exp(n2))/((n1-n2)*Y1L)
Q1L = Y1L*mu*exp(-mu)
Emu = EQ(mu)/Q(mu)
R = mpf('0.5')*(-Q(mu)*mpf('1.2')*H2(Emu) + Q1L*(1-H2(e1U)))
print("y0L", y0L, "Y1L", Y1L, "Y1true", 1-(1-eta), "e1U", e1U, "Q1L", Q1L, "Qmu", Q(mu), "Emu", Emu)
print("R", R)
print("frac", Q1L/Q(mu)*(1-H2(e1U)) - mpf('1.2')*H2(Emu))
print("ell(1e6, leak f*H2*n)", (10**6*(Q1L/Q(mu))*(1-H2(e1U)) - 10**6*mpf('1.2')*H2(Emu)))
print("duty", 100/mpf('920.00096'), 100/mpf('845.00096'))
# 23.5% example: QBER 2.6%, mu=.5
