"""Fitting noisy rating sensors on a handful of co-rated items.

A sensor relates one person's (or item's) ratings to another's through a
linear channel with Gaussian noise.  This script fits both channel models
on tiny samples and shows why the dummy-observation weight K matters.
"""

from sensorcf import PairPrior, RatingScale, fit_noisy1, fit_noisy2, predictive_density

scale = RatingScale.from_bounds(0, 5)

print("Two users co-rated four movies (x = active user, y = neighbor):")
pairs = [(1, 2), (2, 2), (4, 5), (5, 4)]
print("  pairs:", pairs)

fit = fit_noisy1(pairs, k=0)
print(f"\nFull linear fit (no dummies): y ~ {fit.alpha:.3f} + {fit.beta:.3f} x")
print(f"  noise variance {fit.sigma2:.3f}, goodness of fit r^2 = {fit.r2:.3f}")

print("\nNow only TWO co-rated movies that happen to line up exactly:")
tiny = [(1, 1), (4, 4)]
perfect = fit_noisy1(tiny, k=0)
print(f"  k=0 fit: sigma2 = {perfect.sigma2:.6f}, r^2 = {perfect.r2:.3f}")
print("  A zero-variance sensor would silence every other sensor in the")
print("  fusion, purely because of a two-point coincidence.")

prior = PairPrior.uniform(scale)
regularized = fit_noisy1(tiny, prior, k=1)
print(f"  k=1 fit: sigma2 = {regularized.sigma2:.3f}, r^2 = {regularized.r2:.3f}")
print("  One dummy observation spread over all rating pairs keeps the")
print("  sensor honest: still informative, no longer deterministic.")

print("\nThe identity-channel variant assumes y = x and learns only noise:")
for k in (0, 1):
    fit2 = fit_noisy2([(1, 2), (3, 3), (5, 4)], prior, k=k)
    print(f"  k={k}: sigma2 = {fit2.sigma2:.3f}")

print("\nThe channel turns a neighbor's observed rating into evidence:")
fit = fit_noisy1(pairs, prior, k=1)
y = 5  # the neighbor rated the target movie 5
for hypothesis in scale.values:
    d = predictive_density(fit, y, hypothesis, scale)
    bar = "#" * int(60 * d)
    print(f"  density(y=5 | active rating = {hypothesis}) = {d:.4f} {bar}")
print("The density peaks where the channel maps the hypothesis near 5.")
