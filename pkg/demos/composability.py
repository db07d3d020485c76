"""Which extensions can be stacked, and what the result may manipulate."""

from byzext.extensions import compatible, composability, lint_class, parse_extension

for texts in (["B", "S"], ["RC(all)", "SC(all)", "BC"], ["LSS"]):
    exts = [parse_extension(t, 2) for t in texts]
    res = compatible(exts, n=2, horizon=2)
    comp = res.extension
    print(f"{comp.name}: class {comp.impl_class}, compatible={res.compatible} "
          f"(witness {res.witness}), lint={lint_class(comp) or 'clean'}")

print("EvFJP on top of EvFJP:", composability("EvFJP", "EvFJP"))
print("Others on top of JP:  ", composability("Others", "JP"))
