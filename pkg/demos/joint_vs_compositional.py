# LAS + text NLU against the jointly trained model that reads the decoder's
# hidden states.  Same corpus, same seed; a few minutes on one core.
from jointslu.config import load_config, load_stage_configs
from jointslu.experiment import pinned_split, shipped_config
from jointslu.metrics import evaluate
from jointslu.models import joint_forward
from jointslu.pipeline import decode_corpus, group
from jointslu.training import train_joint, train_las, train_nlu

data = pinned_split(1200)
mcfg, tcfg = load_config(shipped_config("las"), ["epochs=8"])
las, _ = train_las(data.train, data.dev, tcfg, data.vocab, mcfg)
mcfg, tcfg = load_config(shipped_config("nlu"))
nlu, _ = train_nlu(data.train, data.dev, tcfg, data.vocab, mcfg)

mcfg, stages = load_stage_configs(shipped_config("joint"))
stages = [s for s in stages if s[0] != "asr"]
joint, report = train_joint(data.train, data.dev, stages, data.vocab, mcfg, pretrained_las=las,
                            intents=nlu.intents, tags=nlu.tags)

comp = evaluate(group(decode_corpus(data.eval, las, 4, nlu)), data.eval)
jnt = evaluate(group(decode_corpus(data.eval, joint, 4)), data.eval)
for name, rep in (("compositional", comp), ("joint", jnt)):
    print(f"{name:<14} WER {rep['wer']:.4f} ICER {rep['icer']:.4f} SemER {rep['semer']:.4f} IRER {rep['irer']:.4f}")

best = joint_forward(data.eval[0].features, joint, 4)[0]
print(best.transcript, "->", best.interpretation)
