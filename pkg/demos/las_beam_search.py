# A small listen-attend-spell recognizer trained for a few epochs, then
# beam-decoded.  About two minutes on one core.
from jointslu.config import load_config
from jointslu.experiment import pinned_split, shipped_config
from jointslu.metrics import wer
from jointslu.models import beam_decode, las_greedy
from jointslu.tokenizer import detokenize
from jointslu.training import train_las

data = pinned_split()
mcfg, tcfg = load_config(shipped_config("las"))
las, report = train_las(data.train, data.dev, tcfg, data.vocab, mcfg)
for rec in report.epochs:
    print(f"epoch {rec.epoch}: train {rec.train_loss:.2f} dev {rec.dev_metric} {rec.dev_value:.3f}")

for u in data.eval[:3]:
    print("ref   ", u.transcript)
    for h in beam_decode(las.model, u.features, 4):
        print(f"  {h.score:7.3f} {detokenize(h.text_pieces, data.vocab)}")
    assert beam_decode(las.model, u.features, 1)[0].pieces == las_greedy(las.model, u.features)

errs = [wer(u.words, detokenize(beam_decode(las.model, u.features, 4)[0].text_pieces, data.vocab).split())[0]
        for u in data.eval]
print("eval WER", sum(e.errors for e in errs) / sum(len(u.words) for u in data.eval))
