"""Solve the five-node toy under every variant and print placements, routes and delays."""

from nfvslice.formulation import VARIANTS, build
from nfvslice.instancegen import fig1_instance
from nfvslice.mblp import solve_mblp
from nfvslice.solution import decode, validate


def main():
    for fixture in ("two-service", "rate4"):
        inst = fig1_instance(fixture)
        for variant in VARIANTS:
            model = build(inst, variant)
            sol = solve_mblp(model)
            print(f"[{fixture} / {variant}] {sol.status.value}", end="")
            if not sol.has_solution:
                print()
                continue
            plan = decode(model, sol, inst)
            report = validate(plan, inst)
            print(f"  objective={sol.objective:g} activated={','.join(plan.activated)}")
            for sp in plan.services:
                d = report.delays[str(sp.service_id)]
                print(f"  service {sp.service_id}: placement={sp.placement} "
                      f"delay={d['total']:g} (threshold {d['threshold']:g})")
                for seg in sp.segments:
                    routes = " + ".join(f"{'>'.join(p.nodes)}@{p.rate:g}" for p in seg.paths)
                    print(f"    segment {seg.s}: {routes}")
            failed = [c.family for c in report.failures]
            print(f"  validation: {'all families pass' if not failed else 'fails ' + ', '.join(failed)}")


if __name__ == "__main__":
    main()
