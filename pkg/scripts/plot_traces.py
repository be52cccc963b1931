"""Plot tilt and yaw-proxy errors from a run.csv written by ``velaid run`` (needs matplotlib)."""

import sys

import matplotlib.pyplot as plt

from velaid.record import replay_run


def main(path: str) -> None:
    rr = replay_run(path)
    fig, (ax1, ax2) = plt.subplots(2, 1, sharex=True)
    for est in rr.estimators():
        ax1.semilogy(rr.t, rr[est + ".tilt_angle"][:, 0], label=est)
        if est + ".yaw_angle" in rr.blocks:
            ax2.plot(rr.t, rr[est + ".yaw_angle"][:, 0], label=est)
    ax1.set_ylabel("tilt error [rad]")
    ax2.set_ylabel("yaw proxy error [rad]")
    ax2.set_xlabel("t [s]")
    ax1.legend()
    plt.show()


if __name__ == "__main__":
    main(sys.argv[1] if len(sys.argv) > 1 else "run/run.csv")
