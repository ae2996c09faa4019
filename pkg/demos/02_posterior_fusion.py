"""Fusing user and item sensors into a rating posterior.

Builds the full prediction model for one (user, movie) query on a small
ratings matrix: every training user who rated the movie and every movie
the active user has rated becomes a candidate sensor, the best ones are
kept, and Bayes' rule combines their evidence with the rating prior.
"""

import io

from sensorcf import RatingScale, build_model, load_ratings, posterior, save_model

scale = RatingScale.from_bounds(0, 5)

# a compact training matrix: 6 users x 5 movies
ratings = """
u0 m0 4\nu0 m1 5\nu0 m2 1\nu0 m4 4
u1 m0 4\nu1 m1 4\nu1 m2 2\nu1 m3 4
u2 m0 1\nu2 m1 2\nu2 m2 5\nu2 m3 1
u3 m0 5\nu3 m1 4\nu3 m3 5\nu3 m4 5
u4 m0 2\nu4 m2 4\nu4 m3 2
u5 m0 3\nu5 m1 3\nu5 m2 3\nu5 m4 3
"""
train = load_ratings(io.StringIO(ratings.replace("\\n", "\n")), scale)
print(f"training matrix: {train.n_users} users, {train.n_items} items, "
      f"{train.n_ratings} ratings")

# the active user loved m1 and m4, hated m2; how will they rate m3 (item 3)?
observed = {1: 5, 2: 0, 4: 5}
target = 3

for variant in ("noisy1", "noisy2"):
    model = build_model(train, observed, target, variant=variant, k=1.0)
    dist = posterior(model, scale)
    print(f"\n{variant}: {len(model.user_sensors)} user sensors, "
          f"{len(model.item_sensors)} item sensors")
    for ref in model.user_sensors:
        f = ref.fit
        r2 = "-" if f.r2 is None else f"{f.r2:.2f}"
        print(f"  user {ref.id}: evidence {ref.evidence}, "
              f"alpha {f.alpha:+.2f}, beta {f.beta:+.2f}, "
              f"sigma2 {f.sigma2:.2f}, r2 {r2}, n {f.n}")
    print("  posterior:", {v: round(p, 3) for v, p in dist.probs.items()})
    print(f"  expected rating: {dist.expected:.3f}")

print("\nWith no evidence at all, the posterior is just the prior:")
empty = build_model(train, {}, 99, variant="noisy2")
print("  ", {v: round(p, 3) for v, p in posterior(empty, scale).probs.items()})

model = build_model(train, observed, target, variant="noisy1", k=1.0)
save_model(model, scale, "/tmp/demo_model.tsv")
print("\nModel saved as flat records; first lines of /tmp/demo_model.tsv:")
with open("/tmp/demo_model.tsv") as fh:
    for _, line in zip(range(10), fh):
        print("  " + line.rstrip())
