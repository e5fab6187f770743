#!/usr/bin/env python3
"""Write data/classes.csv and the 12-class replay fixture under data/replay/.

The replay cache holds synthetic, noisy source answers derived from the
ground truth (seeded), laid out exactly as the fetcher caches live answers.
Re-running the script reproduces the shipped files byte for byte.
"""

import csv
import hashlib
import json
import random
import shutil
from pathlib import Path

ROOT = Path(__file__).resolve().parent.parent
DATA = ROOT / "data"

# id, singular, plural, kb id, ground-truth count
CLASSES = {
    "creative work": [
        ("book", "book", "books", "Q571", 129864880),
        ("painting", "painting", "paintings", "Q3305213", 99896),
        ("film", "film", "films", "Q11424", 500000),
        ("board_game", "board game", "board games", "Q131436", 150000),
        ("website", "website", "websites", "Q35127", 1130000000),
        ("religious_text", "religious text", "religious texts", "Q179461", 19),
        ("song", "song", "songs", "Q7366", 97000000),
        ("video_game", "video game", "video games", "Q7889", 1100000),
        ("opera", "opera", "operas", "Q1344", 2500),
        ("symphony", "symphony", "symphonies", "Q9734", 1300),
        ("novel", "novel", "novels", "Q8261", 7000000),
        ("tv_series", "television series", "television series", "Q5398426", 120000),
        ("musical", "musical", "musicals", "Q2743", 2800),
        ("podcast", "podcast", "podcasts", "Q24634210", 4000000),
        ("sculpture", "sculpture", "sculptures", "Q860861", 1500000),
    ],
    "geographical entity": [
        ("river", "river", "rivers", "Q4022", 300000),
        ("castle", "castle", "castles", "Q23413", 850000),
        ("lake", "lake", "lakes", "Q23397", 117000000),
        ("dam", "dam", "dams", "Q12323", 58700),
        ("national_park", "national park", "national parks", "Q46169", 3369),
        ("city", "city", "cities", "Q515", 3230100),
        ("island", "island", "islands", "Q23442", 333000),
        ("mountain", "mountain", "mountains", "Q8502", 1000000),
        ("volcano", "volcano", "volcanoes", "Q8072", 1350),
        ("waterfall", "waterfall", "waterfalls", "Q34038", 21000),
        ("glacier", "glacier", "glaciers", "Q35666", 198000),
        ("desert", "desert", "deserts", "Q8514", 33),
        ("cave", "cave", "caves", "Q35509", 400000),
        ("beach", "beach", "beaches", "", 151000),
        ("airport", "airport", "airports", "Q1248784", 41700),
    ],
    "man-made object": [
        ("satellite", "satellite", "satellites", "Q26540", 8900),
        ("submarine", "submarine", "submarines", "Q2811", 500),
        ("bicycle", "bicycle", "bicycles", "Q11442", 1000000000),
        ("car", "car", "cars", "Q1420", 1446000000),
        ("smartphone", "smartphone", "smartphones", "Q22645", 6600000000),
        ("aircraft", "aircraft", "aircraft", "Q11436", 460000),
        ("ship", "ship", "ships", "Q11446", 102899),
        ("locomotive", "locomotive", "locomotives", "Q93301", 310000),
        ("lighthouse", "lighthouse", "lighthouses", "Q39715", 18600),
        ("bridge", "bridge", "bridges", "Q12280", 2000000),
        ("skyscraper", "skyscraper", "skyscrapers", "Q11303", 4400),
        ("space_station", "space station", "space stations", "Q25956", 12),
        ("telescope", "telescope", "telescopes", "", 60000),
        ("wind_turbine", "wind turbine", "wind turbines", "Q49833", 341000),
        ("nuclear_reactor", "nuclear reactor", "nuclear reactors", "Q80877", 440),
    ],
    "occupation": [
        ("politician", "politician", "politicians", "Q82955", 6500000),
        ("actor", "actor", "actors", "Q33999", 2400000),
        ("physicist", "physicist", "physicists", "Q169470", 1060000),
        ("architect", "architect", "architects", "Q42973", 1621600),
        ("school_teacher", "school teacher", "school teachers", "Q2251335", 85000000),
        ("astronaut", "astronaut", "astronauts", "Q11631", 600),
        ("pilot", "aircraft pilot", "aircraft pilots", "Q2095549", 290000),
        ("nurse", "nurse", "nurses", "Q186360", 27900000),
        ("physician", "physician", "physicians", "Q39631", 13000000),
        ("lawyer", "lawyer", "lawyers", "Q40348", 15000000),
        ("journalist", "journalist", "journalists", "Q1930187", 600000),
        ("mathematician", "mathematician", "mathematicians", "Q170790", 80000),
        ("chef", "chef", "chefs", "", 2100000),
        ("firefighter", "firefighter", "firefighters", "Q107711", 4800000),
        ("footballer", "footballer", "footballers", "Q937857", 265000000),
    ],
    "organization": [
        ("airline", "airline", "airlines", "Q46970", 5000),
        ("university", "university", "universities", "Q3918", 31000),
        ("football_club", "football club", "football clubs", "Q476028", 301000),
        ("hospital", "hospital", "hospitals", "Q16917", 140033),
        ("bank", "bank", "banks", "Q22687", 25500),
        ("museum", "museum", "museums", "Q33506", 104000),
        ("library", "library", "libraries", "Q7075", 2600000),
        ("political_party", "political party", "political parties", "Q7278", 15500),
        ("newspaper", "newspaper", "newspapers", "Q11032", 20600),
        ("school", "school", "schools", "Q3914", 3020000),
        ("record_label", "record label", "record labels", "Q18127", 38000),
        ("nonprofit", "nonprofit organization", "nonprofit organizations", "Q163740", 10000000),
        ("stock_exchange", "stock exchange", "stock exchanges", "Q11691", 60),
        ("hotel", "hotel", "hotels", "Q27686", 700000),
        ("central_bank", "central bank", "central banks", "Q66344", 180),
    ],
    "species": [
        ("snake", "snake species", "snake species", "Q2102", 3900),
        ("insect", "insect species", "insect species", "Q1390", 5500000),
        ("fish", "fish species", "fish species", "Q152", 36000),
        ("bacteria", "bacteria species", "bacteria species", "Q10876", 6300000000),
        ("bee", "bee species", "bee species", "", 20000),
        ("bird", "bird species", "bird species", "Q5113", 11000),
        ("mammal", "mammal species", "mammal species", "Q7377", 6400),
        ("ant", "ant species", "ant species", "Q7386", 14000),
        ("spider", "spider species", "spider species", "Q1357", 50000),
        ("frog", "frog species", "frog species", "Q53636", 7400),
        ("butterfly", "butterfly species", "butterfly species", "Q11946202", 17500),
        ("shark", "shark species", "shark species", "Q7372", 540),
        ("orchid", "orchid species", "orchid species", "Q25308", 28000),
        ("tree", "tree species", "tree species", "Q10884", 73300),
        ("fungus", "fungus species", "fungus species", "Q764", 2200000),
    ],
}

REPLAY_IDS = [
    "book", "painting", "river", "castle", "satellite", "bicycle",
    "politician", "astronaut", "airline", "university", "snake", "insect",
]

# must match SubgroupScheme::g20()
G20 = [
    ("AR", "Argentina", "Q414"), ("AU", "Australia", "Q408"), ("BR", "Brazil", "Q155"),
    ("CA", "Canada", "Q16"), ("CN", "China", "Q148"), ("FR", "France", "Q142"),
    ("DE", "Germany", "Q183"), ("IN", "India", "Q668"), ("ID", "Indonesia", "Q252"),
    ("IT", "Italy", "Q38"), ("JP", "Japan", "Q17"), ("KR", "South Korea", "Q884"),
    ("MX", "Mexico", "Q96"), ("RU", "Russia", "Q159"), ("SA", "Saudi Arabia", "Q851"),
    ("ZA", "South Africa", "Q258"), ("TR", "Turkey", "Q43"),
    ("GB", "the United Kingdom", "Q145"), ("US", "the United States", "Q30"),
]

# must match PromptTemplate::default()
PROMPT = {
    "exemplars": [
        {"question": "How many countries are there?", "answer": "There are 195 countries in the world."},
        {"question": "How many provinces are there in Canada?", "answer": "There are 10 provinces in Canada."},
        {"question": "How many species of penguins are there?", "answer": "There are about 18 species of penguins."},
    ],
    "model": "gpt-3.5-turbo-instruct",
    "temperature": 0.0,
    "max_tokens": 15,
}

RETRIEVED_AT = "2022-06-01T00:00:00Z"
HEADER = ["id", "label_singular", "label_plural", "domain", "kb_entity_id", "gt_cardinality"]


def lm_version():
    canonical = json.dumps(PROMPT, separators=(",", ":"), ensure_ascii=False)
    return "lm-" + hashlib.sha256(canonical.encode()).hexdigest()[:8]


def rows():
    for domain, classes in CLASSES.items():
        for cid, sing, plur, qid, gt in classes:
            yield [cid, sing, plur, domain, qid, str(gt)]


def write_csv(path, selected):
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(HEADER)
        w.writerows(selected)


def human(n):
    """Render a count the way a web page or a model might."""
    for scale, word in ((1e9, "billion"), (1e6, "million")):
        if n >= scale:
            return f"{n / scale:.1f} {word}"
    return f"{int(round(n)):,}"


def parsed(n):
    """The value the Rust quantity parser reads back from human(n)."""
    for scale in (10**9, 10**6):
        if n >= scale:
            return float(round(n / scale * 10) * (scale // 10))
    return float(int(round(n)))


def kb_query(domain, qid, country):
    """Mirror of kb::count_query with the transitive pattern."""
    if domain == "occupation":
        body = f"?item wdt:P106/wdt:P279* wd:{qid} ."
    elif domain == "species":
        body = f"?item wdt:P171* wd:{qid} ; wdt:P105 wd:Q7432 ."
    else:
        body = f"?item wdt:P31/wdt:P279* wd:{qid} ."
    if country:
        prop = "P27" if domain == "occupation" else "P17"
        body += f" ?item wdt:{prop} wd:{country} ."
    return f"SELECT (COUNT(DISTINCT ?item) AS ?count) WHERE {{ {body} }}"


def cache_entry(source, cid, scope, version, value, query, raw):
    return {
        "source": source,
        "class_id": cid,
        "scope": "root" if scope == "root" else {"subgroup": scope},
        "template_version": version,
        "value": value,
        "query": query,
        "raw": raw,
        "retrieved_at": RETRIEVED_AT,
    }


def write_entry(root, source, version, cid, scope, entry):
    path = root / source.lower() / version / cid / f"{scope}.json"
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(entry, indent=2, ensure_ascii=False) + "\n")


def make_replay():
    rng = random.Random(20221017)
    out = DATA / "replay"
    if out.exists():
        shutil.rmtree(out)
    by_id = {r[0]: r for r in rows()}
    selected = [by_id[i] for i in REPLAY_IDS]
    write_csv(out / "classes.csv", selected)
    cache = out / "cache"
    versions = {"KB": "kb-v1", "SE": "se-v1", "LM": lm_version()}
    # per-source multiplicative bias (log10) and noise
    profile = {"KB": (-1.5, 0.9), "SE": (0.0, 0.7), "LM": (0.0, 0.5)}
    # country shares of the world total, before noise
    weights = [rng.uniform(0.2, 3.0) for _ in G20]
    total = sum(weights) * 3.0

    for cid, sing, plur, domain, qid, gt in selected:
        gt = int(gt)
        for source in ("KB", "SE", "LM"):
            bias, sigma = profile[source]
            for scope, phrase, country in [("root", None, None)] + G20:
                if source == "KB" and (not qid or (scope != "root" and domain in ("species", "creative work"))):
                    continue
                if rng.random() < 0.08:
                    continue  # never fetched: replay reports it offline
                share = 1.0 if scope == "root" else weights[[g[0] for g in G20].index(scope)] / total
                noise = rng.gauss(bias, sigma)
                value = max(gt * share * 10 ** noise, 0.0)
                empty = rng.random() < 0.1
                if source == "KB":
                    count = int(round(value))
                    query = kb_query(domain, qid, country)
                    raw = json.dumps({"results": {"bindings": [{"count": {"value": str(count)}}]}})
                    entry = cache_entry(source, cid, scope, versions[source], float(count), query, raw)
                elif source == "SE":
                    query = f"how many {plur} are there" + (f" in {phrase}" if phrase else "")
                    if empty:
                        snippets = [{"rank": 1, "text": f"Find the best {plur} near you."}]
                        entry = cache_entry(source, cid, scope, versions[source], None, query, json.dumps(snippets))
                    else:
                        snippets = [
                            {"rank": 1, "text": f"There are about {human(value)} {plur}" + (f" in {phrase}." if phrase else " worldwide.")},
                            {"rank": 2, "text": f"Lists of {plur} and related topics."},
                        ]
                        entry = cache_entry(source, cid, scope, versions[source], parsed(value), query, json.dumps(snippets))
                else:
                    query = f"How many {plur} are there" + (f" in {phrase}?" if phrase else "?")
                    if empty:
                        entry = cache_entry(source, cid, scope, versions[source], None, query, " I don't know.")
                    else:
                        where = f" in {phrase}" if phrase else " in the world"
                        raw = f" There are about {human(value)} {plur}{where}."
                        entry = cache_entry(source, cid, scope, versions[source], parsed(value), query, raw)
                write_entry(cache, source, versions[source], cid, scope, entry)


def main():
    all_rows = list(rows())
    ids = [r[0] for r in all_rows]
    gts = [r[5] for r in all_rows]
    assert len(all_rows) == 90 and len(set(ids)) == 90
    assert len(set(gts)) == 90, "ground-truth counts must be distinct"
    write_csv(DATA / "classes.csv", all_rows)
    make_replay()
    print("lm template version", lm_version())


if __name__ == "__main__":
    main()
