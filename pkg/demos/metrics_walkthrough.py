# Word alignment counts, slot-level semantic errors and the n-best oracle.
from jointslu.corpus import Interpretation, Utterance
from jointslu.metrics import Hyp, edit_stats, icer, irer, nbest_oracle, semer

print(edit_stats("set an alarm for six".split(), "set alarm for the six".split()))

ref = Interpretation("SetNotificationIntent", (("NotificationType", "alarm"), ("Time", "six a.m.")))
for hyp in (ref,
            Interpretation(ref.intent, (("NotificationType", "alarm"), ("Time", "six p.m."))),
            Interpretation("SetTimerIntent", (("NotificationType", "alarm"),))):
    s = semer(ref, hyp)
    print(f"SemER {s.rate:.3f}  C={s.correct} D={s.deletion} I={s.insertion} S={s.substitution}")

pairs = [("A", "A"), ("B", "A"), ("C", "C"), ("A", "A")]
print("ICER", icer(pairs))
print("IRER", irer([semer(ref, ref), semer(ref, Interpretation(ref.intent))]))


u = Utterance("u1", "set an alarm for six a.m.", ref.intent,
              ["Other", "Other", "NotificationType", "Other", "Time", "Time"])
assert u.interpretation() == ref
nbest = [[Hyp("set alarm for six a.m.", Interpretation(ref.intent, ref.slots[1:])),
          Hyp("set an alarm for six a.m.", ref)]]
print(nbest_oracle(nbest, [u]))
