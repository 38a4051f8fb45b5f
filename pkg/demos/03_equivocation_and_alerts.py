"""Byzantine senders against each protocol.

An equivocating sender multicasts two conflicting messages under one
sequence number.  E and 3T make conflicting delivery impossible: the ack
thresholds force any two validating sets to share a correct process, and
a correct process never acknowledges both sides.  ACT detects the signed
conflict through its probing phase and floods an alert that convicts the
sender before any recovery acknowledgment can be signed.
"""

from securecast import SimConfig, run_world

print("== Equivocation under E and 3T: never a conflicting delivery ==")
for proto in ("e", "3t"):
    conflicts = deliveries = 0
    for seed in range(30):
        r = run_world(SimConfig(protocol=proto, n=13, t=4,
                                adversary="equivocate", messages=1, seed=seed))
        conflicts += r.conflicts
        deliveries += r.total_deliveries()
    print(f"  {proto.upper():3s}: 30 attacked runs, {deliveries} deliveries, "
          f"{conflicts} conflicting ids")
    assert conflicts == 0

print()
print("== Equivocation under ACT: alerts convict the sender ==")
alerts = acks_suppressed = 0
for seed in range(30):
    r = run_world(SimConfig(protocol="act", n=13, t=4, kappa=2, delta=2,
                            adversary="equivocate", messages=1, seed=seed))
    alerts += r.alerts_raised
print(f"  30 attacked runs raised {alerts} alerts; convicted senders are")
print("  shunned, so their recovery attempts die during the forced ack delay.")

print()
print("== The collusive team can beat ACT only on an all-faulty witness set ==")
attacked = conflicting = 0
for seed in range(400):
    r = run_world(SimConfig(protocol="act", n=31, t=10, kappa=3, delta=5,
                            adversary="collusive", messages=1, seed=seed,
                            record_trace=False, stability=False))
    attacked += r.attacked
    conflicting += r.attacked_conflicts
print(f"  {attacked} attacked ids across independent runs: {conflicting} "
      f"conflicting deliveries")
print(f"  (expected around (t/n)^kappa = 3.4% of ids; sequence-order "
      f"enforcement stops a sender from skipping ahead to favorable ids)")
