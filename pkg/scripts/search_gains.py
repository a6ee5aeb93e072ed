"""Grid search for cart-pendulum gains that pass the gain conditions.

Prints the best candidates, fastest linearized decay first. The shipped
defaults in ``sidapbc/examples/data/cart_pendulum.json`` are the top entry.
"""

import argparse

from sidapbc.examples import cart_pendulum as cp


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--low", type=float, default=-1.0, help="lower end of the q_u interval")
    parser.add_argument("--high", type=float, default=1.0, help="upper end of the q_u interval")
    parser.add_argument("--top", type=int, default=5, help="number of candidates to print")
    args = parser.parse_args()
    ranked = cp.search_gains(cp.default_params(), (args.low, args.high))
    if not ranked:
        raise SystemExit("no gain set passes on this interval")
    print("rate      k_e     k_u      K_k     K_P")
    for rate, g in ranked[: args.top]:
        print(f"{rate:.4f}  {g.k_e:6.3f}  {g.k_u:7.2f}  {g.K_k[0, 0]:6.3f}  {g.K_P[0, 0]:6.3f}")


if __name__ == "__main__":
    main()
