#!/usr/bin/env python3
"""Regenerate the bundled synthetic demo fixture.

Produces 500 product interaction rows and 100 platform Q&A pairs under
src/ecomforge/data/. Fully deterministic; the committed files are the output
of this script with the default seed.
"""
from __future__ import annotations

import json
import random
from pathlib import Path

OUT_DIR = Path(__file__).resolve().parent.parent / "src" / "ecomforge" / "data"

PRODUCTS = {
    "clothing": ["maxi dress", "linen shirt", "wool cardigan", "denim jacket", "kimono robe"],
    "accessories": ["silk scarf", "leather belt", "wool beanie", "hair clip set", "bow tie"],
    "home and living": ["salt lamp", "ceramic vase", "throw blanket", "wall clock", "candle set"],
    "weddings": ["bridal veil", "ring pillow", "table numbers", "guest book", "cake topper"],
    "art and collectibles": ["giclee print", "bronze figurine", "watercolor portrait", "enamel pin", "vintage poster"],
    "craft supplies and tools": ["yarn bundle", "stamp set", "resin molds", "embroidery hoop", "bead assortment"],
    "jewelry": ["pendant necklace", "stacking rings", "charm bracelet", "stud earrings", "locket"],
    "paper and party supplies": ["greeting cards", "party banner", "gift wrap roll", "sticker sheet", "invitation set"],
    "toys and games": ["wooden puzzle", "plush bear", "board game", "building blocks", "toy train"],
    "electronics and accessories": ["phone stand", "cable organizer", "laptop sleeve", "earbud case", "usb lamp"],
    "books movies and music": ["vinyl record", "poetry anthology", "movie poster book", "songbook", "journal"],
    "bath and beauty": ["soap bar set", "bath bombs", "beard oil", "lip balm trio", "body scrub"],
    "bags and purses": ["tote bag", "crossbody purse", "canvas backpack", "clutch wallet", "drawstring pouch"],
    "shoes": ["leather sandals", "ballet flats", "ankle boots", "espadrilles", "house slippers"],
    "pet supplies": ["cat collar", "dog bandana", "pet bed", "treat jar", "rope toy"],
}

ADJECTIVES = [
    "handmade", "vintage", "personalized", "boho", "minimalist", "rustic",
    "custom", "eco friendly", "artisan", "luxury", "modern", "classic",
]
MATERIALS = [
    "oak", "brass", "organic cotton", "recycled glass", "merino wool",
    "bamboo", "sterling silver", "terracotta", "linen", "walnut",
]
EXTRAS = [
    "gift boxed", "free engraving", "limited edition", "small batch",
    "made to order", "hand finished", "fair trade", "new season",
]
EMOJI = ["🔥", "✨", "🎁", "💎", "🌿", "⭐"]

QUERY_SHAPES = [
    "{adj} {product}",
    "{product} for {who}",
    "{adj} {product} gift",
    "{material} {product}",
    "best {product}",
]
WHO = ["mom", "dad", "kids", "him", "her", "friends", "teachers", "couples"]

ACTIONS = ["no_action", "click", "cart_add", "purchase"]
ACTION_WEIGHTS = [0.2, 0.4, 0.25, 0.15]

QA_TOPICS = [
    ("How am I charged for {feature}?",
     "Charges for {feature} accrue to your payment account and appear in your monthly statement, itemized per listing."),
    ("How do I set up {feature} for my shop?",
     "Open your shop manager, choose settings, then enable {feature}. Changes apply to new listings within a few minutes."),
    ("Where can I review my {feature} performance?",
     "The stats dashboard shows {feature} performance, including visits, orders, and conversion over any date range."),
    ("Can I cancel {feature} at any time?",
     "Yes. Disable {feature} from your shop settings; billing stops at the end of the current cycle and no further fees accrue."),
    ("What are the eligibility requirements for {feature}?",
     "Shops in good standing with a complete profile and at least one active listing qualify for {feature} automatically."),
]
QA_FEATURES = [
    "Ads", "Offsite Ads", "shop stats", "promoted listings", "sales events",
    "shipping profiles", "gift cards", "star seller status", "shop updates",
    "abandoned cart coupons", "search analytics", "listing videos",
    "production partners", "vacation mode", "custom order requests",
    "targeted offers", "storefront banners", "review responses",
    "deposit schedules", "currency conversion",
]


def make_records(rng: random.Random, n: int = 500) -> list[dict]:
    labels = list(PRODUCTS)
    records = []
    for i in range(n):
        taxonomy = labels[i % len(labels)]
        product = rng.choice(PRODUCTS[taxonomy])
        adj = rng.choice(ADJECTIVES)
        material = rng.choice(MATERIALS)
        extra1, extra2 = rng.sample(EXTRAS, 2)
        title = f"{adj.title()} {material} {product} {extra1}"
        if rng.random() < 0.06:
            title = f"{title} {rng.choice(EMOJI)}"
        description = None
        if rng.random() < 0.92:
            description = (
                f"This {adj} {product} is crafted from {material} and comes {extra1}. "
                f"A thoughtful pick, {extra2}, ready to ship."
            )
        query = None
        if rng.random() < 0.88:
            shape = rng.choice(QUERY_SHAPES)
            query = shape.format(
                adj=rng.choice(ADJECTIVES),
                product=product,
                material=rng.choice(MATERIALS),
                who=rng.choice(WHO),
            )
        action = rng.choices(ACTIONS, weights=ACTION_WEIGHTS, k=1)[0]
        records.append(
            {
                "id": f"rec-{i:04d}",
                "title": title,
                "description": description,
                "taxonomy": taxonomy,
                "query": query,
                "action": action,
            }
        )
    return records


def make_qa(rng: random.Random, n: int = 100) -> list[dict]:
    pairs = []
    for i in range(n):
        question_tpl, answer_tpl = QA_TOPICS[i % len(QA_TOPICS)]
        feature = QA_FEATURES[(i // len(QA_TOPICS)) % len(QA_FEATURES)]
        pairs.append(
            {
                "id": f"qa-{i:03d}",
                "question": question_tpl.format(feature=feature),
                "answer": answer_tpl.format(feature=feature),
            }
        )
    return pairs


def main() -> None:
    rng = random.Random(20240101)
    OUT_DIR.mkdir(parents=True, exist_ok=True)
    records = make_records(rng)
    qa = make_qa(rng)
    with open(OUT_DIR / "demo_records.jsonl", "w", encoding="utf-8") as fh:
        for record in records:
            fh.write(json.dumps(record, ensure_ascii=False) + "\n")
    with open(OUT_DIR / "demo_qa.jsonl", "w", encoding="utf-8") as fh:
        for pair in qa:
            fh.write(json.dumps(pair, ensure_ascii=False) + "\n")
    actions = {a: sum(1 for r in records if r["action"] == a) for a in ACTIONS}
    with_query = sum(1 for r in records if r["query"])
    with_desc = sum(1 for r in records if r["description"])
    print(f"records: {len(records)} (queries {with_query}, descriptions {with_desc})")
    print(f"actions: {actions}")
    print(f"qa pairs: {len(qa)}")


if __name__ == "__main__":
    main()
