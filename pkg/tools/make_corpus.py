"""Regenerate the bundled testbed corpus under src/aegis/data/corpus.

The pages are hand-written below; agent scripts for each paper are frozen
from the offline extractor so the live backend sees the same answers.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
import sys
from html import escape
from pathlib import Path

ROOT = Path(__file__).resolve().parents[1]
sys.path.insert(0, str(ROOT / "src"))

from aegis.agent import format_answer, parse_paper_page  # noqa: E402
from aegis.agent import KeywordConfig  # noqa: E402

OUT = ROOT / "src" / "aegis" / "data" / "corpus"

# (title, [(name, [marker, ...])], {marker: affiliation}, subject, abstract, positive)
NEURIPS = [
    (
        "Scaling Sparse Mixtures for Long-Context Retrieval",
        [("A. Kumar", ["1", "2"]), ("C. Dickens", ["3"]), ("R. Iyer", ["1"])],
        {
            "1": "IIT Bombay, Mumbai, India",
            "2": "Google DeepMind, London, UK",
            "3": "University of Toronto, Toronto, Canada",
        },
        "Deep Learning",
        "We route tokens to sparse experts and retrieve over million-token contexts.",
        True,
    ),
    (
        "Calibrated Uncertainty for Graph Neural Networks",
        [("M. Rao", ["1"]), ("L. Chen", ["2"])],
        {"1": "IISc Bangalore", "2": "Stanford University, Stanford, USA"},
        "Probabilistic Methods",
        "A post-hoc calibration layer for node classification.",
        True,
    ),
    (
        "Efficient Diffusion Sampling via Adaptive Step Schedules",
        [("J. Müller", ["1"]), ("S. Park", ["2"])],
        {"1": "ETH Zurich, Zurich, Switzerland", "2": "KAIST, Daejeon, South Korea"},
        "Generative Models",
        "Experiments include a crop-yield dataset collected in India and in Kenya.",
        False,
    ),
    (
        "Provable Guarantees for Offline Reinforcement Learning",
        [("E. Novak", []), ("P. Horak", [])],
        {"1": "Charles University, Prague, Czech Republic"},
        "Reinforcement Learning",
        "Pessimistic value estimates with finite-sample bounds.",
        False,
    ),
    (
        "Token Merging for Vision Transformers Revisited",
        [("Y. Tanaka", ["1"]), ("H. Sato", ["1"]), ("K. Ito", ["2"])],
        {"1": "University of Tokyo, Tokyo, Japan", "2": "RIKEN AIP, Tokyo, Japan"},
        None,
        "Merging similar tokens halves the cost of ViT inference.",
        False,
    ),
    (
        "Benchmarking Tabular Foundation Models",
        [("P. Dubois", ["1"]), ("A. Silva", ["2"])],
        {"1": "Inria, Paris, France", "2": "University of Lisbon, Lisbon, Portugal"},
        "Datasets and Benchmarks",
        "A benchmark of 120 tabular datasets.",
        False,
    ),
    (
        "Causal Discovery under Latent Confounding",
        [("O. Adeyemi", ["1"]), ("T. Brown", ["2"])],
        {"1": "University of Lagos, Lagos, Nigeria", "2": "Carnegie Mellon University, Pittsburgh, USA"},
        "Causality",
        "Identifiability results for partially observed graphs.",
        False,
    ),
    (
        "Robust Federated Optimization with Heterogeneous Clients",
        [("W. Zhang", ["1"]), ("F. Rossi", ["2"])],
        {"1": "Tsinghua University, Beijing, China", "2": "Politecnico di Milano, Milan, Italy"},
        "Optimization",
        "Client drift is bounded by a proximal correction.",
        False,
    ),
    (
        "Memory-Efficient Fine-Tuning with Low-Rank Adapters",
        [("D. Cohen", ["1"])],
        {"1": "Technion, Haifa, Israel"},
        "Deep Learning",
        "Quantized adapters cut memory use by 4x.",
        False,
    ),
    (
        "Learning to Rank with Pairwise Preference Feedback",
        [("N. Ivanova", ["1"]), ("G. Smith", ["2"])],
        {"1": "University of Amsterdam, Amsterdam, Netherlands", "2": "University of Cambridge, Cambridge, UK"},
        None,
        "Dueling bandits with contextual features.",
        False,
    ),
]

# (slug, title, [(author, [institution, ...])], positive); None authors = front matter
ACL = [
    ("long.0", "Proceedings of the 62nd Annual Meeting (Volume 1: Long Papers): Front Matter", None, False),
    (
        "long.1",
        "Code-Mixed Sentiment Analysis for Low-Resource Languages",
        [("S. Banerjee", ["Microsoft Research India, Bengaluru"]), ("K. Lee", ["University of Washington, Seattle, USA"])],
        True,
    ),
    ("long.2", "Faithful Summarization with Entailment Rewards", [("F. Campbell", ["University of Edinburgh, Edinburgh, UK"])], False),
    (
        "long.3",
        "Multilingual Retrieval-Augmented Generation at Scale",
        [("M. Garcia", ["Meta AI, Menlo Park, USA"]), ("L. Martin", ["Sorbonne University, Paris, France"])],
        False,
    ),
    ("long.4", "Probing Syntactic Knowledge in Speech Models", [("R. Walker", ["Johns Hopkins University, Baltimore, USA"])], False),
    ("industry.1", "Query Understanding for E-Commerce Search", [("V. Reddy", ["Flipkart, Bengaluru, India"])], True),
    ("industry.2", "Deploying LLM Assistants in Customer Support", [("J. Howard", ["Amazon, Seattle, USA"])], False),
    ("industry.3", "Low-Latency Speech Translation in Production", [("C. Lopez", ["Apple, Cupertino, USA"])], False),
]


def neurips_hash(title: str) -> str:
    return hashlib.sha256(title.encode()).hexdigest()[:32]


def neurips_paper(title, authors, affiliations, subject, abstract) -> str:
    head = f'<meta name="DC.subject" content="{escape(subject)}">\n' if subject else ""
    author_html = []
    for name, markers in authors:
        sup = f"<sup>{','.join(markers)}</sup>" if markers else ""
        author_html.append(f'<span class="author">{escape(name)}{sup}</span>')
    aff_html = "\n".join(
        f'<li data-aff="{m}"><sup>{m}</sup> {escape(a)}</li>' for m, a in affiliations.items()
    )
    return f"""<!DOCTYPE html>
<html lang="en">
<head>
<meta charset="utf-8">
{head}<title>{escape(title)}</title>
</head>
<body>
<div class="container">
<h2 class="paper-title">{escape(title)}</h2>
<p class="authors">{", ".join(author_html)}</p>
<ul class="affiliations">
{aff_html}
</ul>
<h4>Abstract</h4>
<p>{escape(abstract)}</p>
<a href="/neurips/2024/">Back to proceedings</a>
</div>
</body>
</html>
"""


def acl_paper(slug, title, authors) -> str:
    metas = [f'<meta name="citation_title" content="{escape(title)}">']
    for name, insts in authors or []:
        metas.append(f'<meta name="citation_author" content="{escape(name)}">')
        metas += [f'<meta name="citation_author_institution" content="{escape(i)}">' for i in insts]
    metas.append('<meta name="citation_conference_title" content="Annual Meeting of the Association for Computational Linguistics">')
    if authors is None:
        body = """<h2>Front Matter</h2>
<p>Table of Contents</p>
<p>Message from the General Chair. The conference venue was Bangkok, Thailand.
Local organisation was supported by volunteers from Bengaluru, India and Singapore.</p>
<ol><li>Code-Mixed Sentiment Analysis for Low-Resource Languages ... 1</li>
<li>Faithful Summarization with Entailment Rewards ... 13</li></ol>"""
    else:
        names = ", ".join(escape(n) for n, _ in authors)
        body = f"<h2>{escape(title)}</h2>\n<p class=\"lead\">{names}</p>"
    return (
        "<!DOCTYPE html>\n<html>\n<head>\n<meta charset=\"utf-8\">\n"
        + "\n".join(metas)
        + f"\n<title>{escape(title)} - ACL Anthology</title>\n</head>\n<body>\n{body}\n"
        + f'<a href="https://aclanthology.org/2024.acl-{slug}.pdf">PDF</a>\n</body>\n</html>\n'
    )


NEURIPS_INDEX = """<!DOCTYPE html>
<html>
<head><meta charset="utf-8"><title>NeurIPS 2024 Proceedings</title></head>
<body>
<nav><a href="/">Home</a></nav>
<h2>Advances in Neural Information Processing Systems 37 (NeurIPS 2024)</h2>
<p><a href="../paper/2024/toc.pdf">Table of Contents</a>
<ul class="paper-list">
{items}
</ul>
</body>
</html>
"""

ACL_INDEX = """<!DOCTYPE html>
<html>
<head><meta charset="utf-8"><title>ACL 2024 - ACL Anthology</title></head>
<body>
<h1>Annual Meeting of the Association for Computational Linguistics (2024)</h1>
<p class="intro">Best paper: <a href="../2024.acl-long.2/">Faithful Summarization with Entailment Rewards</a>.
Back to <a href="/">the anthology</a>.</p>
<main>
<h2 id="main">Main Track</h2>
<div class="volume">
<ul>
{long}
</ul>
</div>
<div class="track-header"><h2 id="industry">Industry Track</h2><span class="badge">3 papers</span></div>
<ul>
{industry}
</ul>
</main>
<footer><a href="../2024.acl-long.3/">Most downloaded</a> | <a href="/faq/">FAQ</a></footer>
</body>
</html>
"""

FORM = """<!DOCTYPE html>
<html>
<head><meta charset="utf-8"><title>Paper nomination</title></head>
<body>
<h1>Nominate a paper</h1>
<form id="nomination" method="post" action="/nominate">
<label for="paper_url">Paper URL</label>
<input id="paper_url" name="paper_url" type="text">
<label for="title">Title</label>
<input id="title" name="title" type="text">
<fieldset>
<legend>Authors</legend>
<div id="authors">
<div class="author-row"><input id="author_name_0" name="author_name_0" type="text"><input id="author_affiliation_0" name="author_affiliation_0" type="text"></div>
</div>
<template id="author-row-template"><div class="author-row"><input id="author_name_{i}" name="author_name_{i}" type="text"><input id="author_affiliation_{i}" name="author_affiliation_{i}" type="text"></div></template>
<button id="add-author" type="button" data-action="add-row" data-template="author-row-template" data-target="authors" data-row-class="author-row">Add author</button>
</fieldset>
<label for="institutions">Institutions (one per line)</label>
<textarea id="institutions" name="institutions"></textarea>
<label for="research_area">Research area</label>
<input id="research_area" name="research_area" type="text">
<div class="spacer" style="height: 900px"></div>
<button id="submit" type="submit">Submit nomination</button>
</form>
<script>
document.querySelectorAll('[data-action="add-row"]').forEach(function (btn) {
  btn.addEventListener('click', function () {
    var target = document.getElementById(btn.dataset.target);
    var n = target.querySelectorAll(':scope > .' + btn.dataset.rowClass).length;
    var html = document.getElementById(btn.dataset.template).innerHTML.split('{i}').join(String(n));
    target.insertAdjacentHTML('beforeend', html);
  });
});
</script>
</body>
</html>
"""


def chunked(text: str, size: int = 48) -> list[str]:
    return [text[i : i + size] for i in range(0, len(text), size)]


def main() -> None:
    pages_dir = OUT / "pages"
    pages_dir.mkdir(parents=True, exist_ok=True)
    pages = []
    labels = []
    scripts = [
        {"match_substring": "ECHO-ABC", "chunks": ["A", "B", "C"], "delay_ms": 20},
        {"match_substring": "STALL-ME", "chunks": ["partial answer ", "never sent"], "stall_after": 1, "stall_s": 10},
        {"match_substring": "SERVER-ERROR", "status": 500},
    ]

    def add(path: str, name: str, html: str) -> None:
        (pages_dir / name).write_text(html, encoding="utf-8")
        pages.append({"path": path, "file": f"pages/{name}"})

    items = []
    for n, (title, authors, affs, subject, abstract, positive) in enumerate(NEURIPS):
        digest = neurips_hash(title)
        path = f"/neurips/paper/2024/hash/{digest}-Abstract.html"
        html = neurips_paper(title, authors, affs, subject, abstract)
        add(path, f"neurips_{n:02d}.html", html)
        labels.append((path, int(positive)))
        # alternate relative and root-relative hrefs; a couple of sloppy tags
        href = f"../paper/2024/hash/{digest}-Abstract.html" if n % 2 == 0 else path
        if n == 3:
            items.append(f"<li><a href={href}>{escape(title)}</a>")
        elif n == 6:
            items.append(f"<li><a class=title href='{href}'><b>{escape(title)}</a></b></li>")
        else:
            items.append(f'<li><a href="{href}">{escape(title)}</a></li>')
    add("/neurips/2024/", "neurips_2024.html", NEURIPS_INDEX.format(items="\n".join(items)))

    long_items, industry_items = [], []
    for slug, title, authors, positive in ACL:
        path = f"/acl/2024.acl-{slug}/"
        add(path, f"acl_{slug.replace('.', '_')}.html", acl_paper(slug, title, authors))
        labels.append((path, int(positive)))
        li = f'<li><a href="../2024.acl-{slug}/">{escape(title)}</a></li>'
        (long_items if slug.startswith("long") else industry_items).append(li)
    add("/acl/2024/", "acl_2024.html", ACL_INDEX.format(long="\n".join(long_items), industry="\n".join(industry_items)))

    keywords = KeywordConfig()
    for entry in pages:
        if entry["path"] in ("/neurips/2024/", "/acl/2024/"):
            continue
        page = parse_paper_page((OUT / entry["file"]).read_bytes())
        if page.authors:
            claims = any(keywords.matches(a) for _, affs in page.authors for a in affs)
        else:
            claims = keywords.matches(page.text)
        scripts.append({"match_substring": entry["path"], "chunks": chunked(format_answer(page, claims))})

    (OUT / "form.html").write_text(FORM, encoding="utf-8")
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["url", "is_positive"])
    writer.writerows(labels)
    (OUT / "labels.csv").write_text(buf.getvalue(), encoding="utf-8")
    manifest = {
        "pages": pages,
        "labels_csv": "labels.csv",
        "agent_route": "/api/command",
        "agent_scripts": scripts,
        "form": {
            "path": "/nominate",
            "page": "form.html",
            "confirmation_text": "Nomination received",
            "confirms": True,
        },
    }
    (OUT / "manifest.json").write_text(json.dumps(manifest, indent=2, ensure_ascii=False) + "\n", encoding="utf-8")
    print(f"wrote {len(pages)} pages, {len(labels)} labels, {len(scripts)} agent scripts to {OUT}")


if __name__ == "__main__":
    main()
