"""Why faithful descriptions provably help: brute-force entropy verification.

Over small discrete joints we can compute every conditional entropy exactly.
The check: if the description loses little about the embedding
(H(embedding|description) = eps > 0) and the embedding carries label
information beyond the input (conditioning on it drops H(label|input) by
eps' > eps), then conditioning on the description must lower label
uncertainty: H(label|input,description) <= H(label|input) + eps - eps'.
"""

import numpy as np

from verbalgraph import (
    condition_satisfying_joint,
    conditional_entropy,
    random_joint,
    run_suite,
    verify_chain,
    verify_theorem,
)

rng = np.random.default_rng(7)

# --- one worked joint ---------------------------------------------------------
joint = condition_satisfying_joint(rng)
print(f"alphabets (input, embedding, description, label): {joint.sizes}")
report = verify_theorem(joint)
print(f"eps  = H(embedding|description)              = {report.epsilon:.4f} bits")
print(f"eps' = H(label|input) - H(label|input,emb)   = {report.epsilon_prime:.4f} bits")
print(f"H(label|input)                               = {report.rhs:.4f} bits")
print(f"H(label|input,description)                   = {report.lhs:.4f} bits")
print(f"bound: {report.lhs:.4f} <= {report.rhs:.4f} + {report.epsilon:.4f} - "
      f"{report.epsilon_prime:.4f} = {report.quantitative_bound:.4f}   "
      f"holds: {report.conclusion_holds}\n")

# --- the supporting relations hold for arbitrary joints -------------------------
chain = verify_chain(random_joint(rng))
print("supporting relations on an arbitrary random joint:")
print(f"  exact decomposition slack : {chain.decomposition_slack:.2e} bits")
print(f"  info-bound slack          : {chain.info_bound_slack:+.2e} bits (<= 0 means satisfied)")
print(f"  drop-bound slack          : {chain.drop_bound_slack:+.2e} bits (<= 0 means satisfied)\n")

# --- conditioning never hurts ----------------------------------------------------
j = random_joint(rng)
h_plain = conditional_entropy(j, ("label",), ())
h_x = conditional_entropy(j, ("label",), ("input",))
h_xh = conditional_entropy(j, ("label",), ("input", "embedding"))
print(f"H(label) = {h_plain:.4f} >= H(label|input) = {h_x:.4f} >= "
      f"H(label|input,embedding) = {h_xh:.4f}\n")

# --- the randomized suite ---------------------------------------------------------
suite = run_suite(trials=300, chain_trials=150, seed=7)
print(f"randomized suite: {suite.trials} constructed joints, "
      f"{suite.conclusion_failures} conclusion failures, "
      f"max bound violation {suite.max_bound_violation:.2e} bits")
print(f"                  {suite.chain_trials} arbitrary joints, "
      f"{suite.chain_failures} chain failures, max slack {suite.max_chain_slack:.2e} bits")
print(f"passed: {suite.passed}")
