"""Regenerate the bundled linear-Gaussian fixture and its frozen log-likelihood.

The log-likelihood is computed from the dense joint Gaussian law of all
observed values (no filtering recursion), so it is an independent reference
for the Kalman filter.
"""

import csv
import json
from pathlib import Path

import numpy as np
from scipy import stats

DATA = Path(__file__).resolve().parent.parent / "src" / "animove" / "data"
T, d = 40, 2
F = np.array([[0.95, 0.1], [0.0, 0.9]])
c = np.array([0.05, -0.02])
Q = np.array([[0.3, 0.05], [0.05, 0.2]])
H = np.eye(d)
R = np.array([[0.5, 0.1], [0.1, 0.4]])
m0 = np.array([1.0, -1.0])
P0 = np.eye(d)


def joint_loglik(y, observed):
    # mean and covariance of the stacked states z_0..z_{T-1}
    mean = np.empty((T, d))
    A = np.empty((T, d, d))  # A[t] = F^t
    mean[0], A[0] = m0, np.eye(d)
    for t in range(1, T):
        mean[t] = F @ mean[t - 1] + c
        A[t] = F @ A[t - 1]
    cov = np.zeros((T * d, T * d))
    for s in range(T):
        for t in range(s, T):
            # Cov(z_t, z_s) = F^{t-s} Var(z_s)
            vs = A[s] @ P0 @ A[s].T + sum(A[s - k] @ Q @ A[s - k].T for k in range(1, s + 1))
            block = A[t - s] @ vs
            cov[t * d:(t + 1) * d, s * d:(s + 1) * d] = block
            cov[s * d:(s + 1) * d, t * d:(t + 1) * d] = block.T
    ycov = np.kron(np.eye(T), H) @ cov @ np.kron(np.eye(T), H).T + np.kron(np.eye(T), R)
    keep = np.repeat(observed, d)
    ymean = (mean @ H.T).reshape(-1)
    return float(stats.multivariate_normal(ymean[keep], ycov[np.ix_(keep, keep)]).logpdf(y.reshape(-1)[keep]))


def main():
    rng = np.random.default_rng(20240611)
    z = np.empty((T, d))
    z[0] = rng.multivariate_normal(m0, P0)
    for t in range(1, T):
        z[t] = F @ z[t - 1] + c + rng.multivariate_normal(np.zeros(d), Q)
    y = z @ H.T + rng.multivariate_normal(np.zeros(d), R, size=T)
    observed = rng.random(T) > 0.2
    observed[0] = True
    with open(DATA / "lg_fixture.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["time", "y1", "y2"])
        for t in range(T):
            w.writerow([t] + ([repr(float(v)) for v in y[t]] if observed[t] else ["", ""]))
    spec = {"type": "linear_gaussian", "transition": F.tolist(), "offset": c.tolist(), "proc_cov": Q.tolist(),
            "obs_matrix": H.tolist(), "obs_cov": R.tolist(), "init_mean": m0.tolist(), "init_cov": P0.tolist()}
    with open(DATA / "lg_spec.json", "w") as fh:
        json.dump(spec, fh, indent=2)
        fh.write("\n")
    # reload the written values so the frozen number matches the file exactly
    y_file = np.array([[float(v) if v else np.nan for v in r[1:]] for r in csv.reader(open(DATA / "lg_fixture.csv"))
                       if r[0] != "time"])
    obs = ~np.isnan(y_file).any(axis=1)
    with open(DATA / "lg_loglik.json", "w") as fh:
        json.dump({"loglik": joint_loglik(np.nan_to_num(y_file), obs), "method": "dense joint Gaussian"}, fh,
                  indent=2)
        fh.write("\n")


if __name__ == "__main__":
    main()
