"""Credibility of internal counts, an elicited prior and an expert opinion.

A Gamma prior is elicited from a mean of 0.5 and a two-in-three chance
that the intensity lies in [0.25, 0.75]. Fifteen years of internal counts
are then combined with it (two sources) and with one expert who puts the
intensity at 0.7 (three sources). The printout tracks each estimator's
path year by year next to the raw sample mean.

    python demos/evidence_combination.py
"""

from oplda.bayeslib import ExpertOpinions, elicit_gamma_prior, estimator_trajectories, poisson_gamma_posterior

counts = [0, 0, 0, 0, 1, 0, 1, 1, 1, 0, 2, 1, 1, 2, 0]
prior = elicit_gamma_prior(0.5, (0.25, 0.75), 2 / 3)
print(f"elicited prior Gamma(alpha={prior.alpha:.4f}, beta={prior.beta:.5f})")

post, cred = poisson_gamma_posterior(prior, counts)
print(f"after {len(counts)} years: posterior mean {post.mean:.4f}, credibility weight {cred.weight:.3f}")

tr = estimator_trajectories(counts, prior, ExpertOpinions([0.7], 4.0))
print(f"{'year':>4s} {'MLE':>8s} {'2-source':>9s} {'3-source':>9s}")
for row in zip(tr["year"], tr["mle"], tr["two_source"], tr["three_source"]):
    print("{:4d} {:8.3f} {:9.3f} {:9.3f}".format(*row))
