"""Flipping about 2*gamma*n labels is enough to turn a majority-vote learner.

A learner that predicts the majority training label of each subpopulation
is the most local learner there is. This demo samples mixtures with a
target subpopulation of weight gamma, attacks it with round(2*gamma*n)
flips and compares the empirical success rate with the Chernoff bound
1 - exp(-9*gamma*n/5).

Run: python demos/01_oracle_guarantee.py
"""

from poisonlab import chernoff_success_bound, simulate_theorem1, subpop_size_tail, target_mixture

print(f"{'gamma':>6} {'n':>5} {'gamma*n':>7} {'success':>8} {'bound':>10} {'empty':>6} {'tail freq':>9}")
for gamma in (0.005, 0.01, 0.02):
    for n in (250, 1000):
        spec = target_mixture(gamma)
        sim = simulate_theorem1(spec, n, target_subpop=0, trials=300, seed=1)
        tail = subpop_size_tail(spec, n, 0, datasets=1000, seed=2)
        empty = sum(t.subpop_size == 0 for t in sim.trials) / len(sim.trials)
        print(f"{gamma:>6} {n:>5} {gamma * n:>7g} {sim.success_rate:>8.3f} "
              f"{chernoff_success_bound(gamma, n):>10.6f} {empty:>6.3f} {tail.frequency:>9.4f}")

# At gamma*n = 10 and above the simulated rate matches the bound. Below
# that the bound overstates success: with probability about
# exp(-gamma*n) the subpopulation is absent from the training set and
# there is nothing to flip. The "empty" column accounts for the gap. The
# size tail (last column) is the other way the attack can fail, and it
# stays far below its own bound exp(-9*gamma*n/5).
