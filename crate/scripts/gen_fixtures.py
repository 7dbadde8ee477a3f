#!/usr/bin/env python3
"""Regenerate the bundled fixture protocols, golden speech records and sample labels.

The generator writes each protocol in the DIP plenary-protocol-text document
shape and, independently of the Rust parser, records what every speech must
look like after extraction. Run from the repository root:

    python3 scripts/gen_fixtures.py
"""
import json
import random
import re
from pathlib import Path

ROOT = Path(__file__).resolve().parent.parent / "resources" / "fixtures"
RNG = random.Random(20191108)

TOPICS = [
    "Environment",
    "Social Affairs and Education",
    "Economy and Finance",
    "Foreign and Security Policy",
    "Infrastructure and Transport",
    "Health",
]

TOPIC_SENTENCES = {
    "Environment": [
        "Der Klimaschutz verlangt eine konsequente Senkung der Emissionen in allen Sektoren.",
        "Unsere Wälder leiden unter Dürre, Borkenkäfer und steigenden Temperaturen.",
        "Der Ausbau von Windkraft und Solarenergie muss schneller vorankommen.",
        "Das Klimaschutzgesetz legt verbindliche Klimaziele für jedes Jahr fest.",
        "Der Emissionshandel setzt einen Preis auf jede Tonne Kohlendioxid.",
        "Artenschutz und Naturschutz gehören zusammen mit dem Schutz der Moore.",
        "Die Kohleverstromung soll schrittweise beendet werden.",
        "Plastikmüll in Flüssen und Meeren bedroht die Artenvielfalt.",
    ],
    "Social Affairs and Education": [
        "Die Grundsicherung für Kinder soll Familien mit kleinen Einkommen entlasten.",
        "Gute Schulen und gut bezahlte Lehrkräfte sind die Grundlage für Bildungsgerechtigkeit.",
        "Die Rente muss auch für die junge Generation verlässlich bleiben.",
        "Der Mindestlohn sichert Beschäftigten ein würdiges Einkommen.",
        "Das Bürgergeld ersetzt die bisherige Grundsicherung für Arbeitsuchende.",
        "Das BAföG muss an die gestiegenen Mieten der Studierenden angepasst werden.",
        "Kitaplätze fehlen in vielen Kommunen trotz des Rechtsanspruchs.",
        "Die Digitalisierung der Schulen kommt mit dem Digitalpakt nur langsam voran.",
    ],
    "Economy and Finance": [
        "Der Bundeshaushalt muss die Vorgaben der Schuldenbremse einhalten.",
        "Die Inflation belastet Unternehmen und private Haushalte gleichermaßen.",
        "Der Mittelstand braucht weniger Bürokratie und schnellere Genehmigungen.",
        "Die Steuerlast für Betriebe gehört im internationalen Vergleich zur Spitze.",
        "Das Sondervermögen wird außerhalb des regulären Haushalts geführt.",
        "Die Energiepreise gefährden die Wettbewerbsfähigkeit der Industrie.",
        "Der Solidaritätszuschlag soll für kleine und mittlere Einkommen entfallen.",
        "Investitionen in Zukunftstechnologien sichern Wachstum und Arbeitsplätze.",
    ],
    "Foreign and Security Policy": [
        "Die Bundeswehr braucht eine verlässliche Ausstattung und moderne Ausrüstung.",
        "Der russische Angriffskrieg gegen die Ukraine verletzt das Völkerrecht.",
        "Die NATO bleibt das Fundament unserer gemeinsamen Verteidigung.",
        "Das Mandat für den Einsatz in Mali wird um ein weiteres Jahr verlängert.",
        "Waffenlieferungen an die Ukraine werden mit unseren Partnern abgestimmt.",
        "Die Europäische Union muss in der Außenpolitik mit einer Stimme sprechen.",
        "Die Soldatinnen und Soldaten leisten im Auslandseinsatz einen wichtigen Dienst.",
        "Abrüstung und Rüstungskontrolle dürfen nicht aus dem Blick geraten.",
    ],
    "Infrastructure and Transport": [
        "Marode Brücken und Straßen bremsen den Güterverkehr auf der Autobahn.",
        "Die Deutsche Bahn muss pünktlicher werden und ihr Schienennetz sanieren.",
        "Das Deutschlandticket macht den Nahverkehr für viele Pendler günstiger.",
        "Der Breitbandausbau im ländlichen Raum hinkt den Zielen hinterher.",
        "Die Planungsverfahren für Verkehrsprojekte dauern viel zu lange.",
        "Ladesäulen für Elektroautos fehlen an vielen Rastplätzen.",
        "Der Mobilfunkausbau soll Funklöcher entlang der Schienenstrecken schließen.",
        "Die Maut für Lastwagen finanziert den Erhalt der Bundesfernstraßen.",
    ],
    "Health": [
        "Die Pandemie hat unsere Krankenhäuser an die Grenze der Belastung gebracht.",
        "Pflegekräfte verdienen bessere Arbeitsbedingungen und höhere Löhne.",
        "Die Impfkampagne gegen das Coronavirus muss an Tempo gewinnen.",
        "Die Krankenhausreform soll die Versorgung auf dem Land sichern.",
        "Die Beiträge zur gesetzlichen Krankenversicherung steigen weiter.",
        "Lieferengpässe bei Arzneimitteln gefährden die Versorgung der Patienten.",
        "Der Infektionsschutz erfordert klare Regeln für Schulen und Betriebe.",
        "Die Gesundheitsämter brauchen digitale Werkzeuge und mehr Personal.",
    ],
}

NEGATIVE = [
    "Die Bundesregierung hat hier auf ganzer Linie versagt.",
    "Dieser Gesetzentwurf ist handwerklich schlecht und belastet die Bürgerinnen und Bürger.",
    "Die Kosten werden auf die Verbraucher abgewälzt, ohne dass eine Wirkung belegt wäre.",
    "Was Sie hier vorlegen, ist ein weiteres Bürokratiemonster.",
    "Ihre Politik ist gescheitert, und die Menschen zahlen die Zeche.",
    "Wir lehnen diesen verantwortungslosen Antrag entschieden ab.",
    "Das ist ein Armutszeugnis für diese Koalition.",
    "Sie ignorieren die Sorgen der Menschen seit Jahren.",
]

POSITIVE = [
    "Mit diesem Gesetz gehen wir einen wichtigen Schritt in die richtige Richtung.",
    "Ich bin froh, dass wir gemeinsam eine gute Lösung gefunden haben.",
    "Diese Reform stärkt den Zusammenhalt in unserem Land.",
    "Wir schaffen damit Planungssicherheit für viele Menschen.",
    "Ich danke allen Beteiligten für die konstruktive Zusammenarbeit.",
    "Das ist ein großer Erfolg für die Bürgerinnen und Bürger.",
    "Wir unterstützen diesen Vorschlag aus voller Überzeugung.",
    "So sieht verantwortungsvolle und vorausschauende Politik aus.",
]

INTERJECTIONS = [
    ["(Beifall bei der {party})"],
    ["(Zuruf von der {other}: Das ist doch Unsinn!)"],
    ["(Beifall bei Abgeordneten der {party} – Zuruf von der {other}:", "Wo bleiben die Zahlen?)"],
    ["(Heiterkeit bei der {other})"],
    ["(Widerspruch bei der {other})"],
]

# canonical party -> header surface form
SURFACE = {
    "CDU/CSU": "CDU/CSU",
    "SPD": "SPD",
    "Bündnis 90/Die Grünen": "BÜNDNIS 90/DIE GRÜNEN",
    "FDP": "FDP",
    "AfD": "AfD",
    "Die Linke": "DIE LINKE",
    "BSW": "BSW",
    "Fraktionslos": "fraktionslos",
}

MEMBERS = {
    "CDU/CSU": ["Matthias Brandner", "Dr. Katrin Vogelsang", "Stefan Krämer"],
    "SPD": ["Dr. Petra Sommer", "Jürgen Wallner", "Nadine Fuchs"],
    "Bündnis 90/Die Grünen": ["Lena Hartwig", "Dr. Tobias Ebersberg"],
    "FDP": ["Christoph Ahlers", "Dr. Miriam Kessel"],
    "AfD": ["Karsten Hilse", "Dr. Rainer Gottschalk", "Bernd Fehling"],
    "Die Linke": ["Sabine Lorenz", "Dr. Heiko Brunner"],
    "BSW": ["Andrea Köhler"],
    "Fraktionslos": ["Uwe Kramm"],
}

MINISTERS_19 = [
    ("Svenja Schulze", "Bundesministerin für Umwelt, Naturschutz und nukleare Sicherheit", "SPD", "Environment"),
    ("Hubertus Heil", "Bundesminister für Arbeit und Soziales", "SPD", "Social Affairs and Education"),
    ("Jens Spahn", "Bundesminister für Gesundheit", "CDU/CSU", "Health"),
    ("Andreas Scheuer", "Bundesminister für Verkehr und digitale Infrastruktur", "CDU/CSU", "Infrastructure and Transport"),
]
MINISTERS_20 = [
    ("Christian Lindner", "Bundesminister der Finanzen", "FDP", "Economy and Finance"),
    ("Karl Lauterbach", "Bundesminister für Gesundheit", "SPD", "Health"),
    ("Annalena Baerbock", "Bundesministerin des Auswärtigen", "Bündnis 90/Die Grünen", "Foreign and Security Policy"),
    ("Hubertus Heil", "Bundesminister für Arbeit und Soziales", "SPD", "Social Affairs and Education"),
]

PROTOCOLS = [
    ("4352", "19/125", "2019-11-08", "Freitag, den 8. November 2019"),
    ("4470", "19/160", "2020-05-14", "Donnerstag, den 14. Mai 2020"),
    ("4531", "19/200", "2020-12-10", "Donnerstag, den 10. Dezember 2020"),
    ("4610", "19/230", "2021-05-20", "Donnerstag, den 20. Mai 2021"),
    ("4702", "20/10", "2022-01-13", "Donnerstag, den 13. Januar 2022"),
    ("4795", "20/50", "2022-07-07", "Donnerstag, den 7. Juli 2022"),
    ("4876", "20/90", "2023-03-16", "Donnerstag, den 16. März 2023"),
    ("4950", "20/130", "2023-10-19", "Donnerstag, den 19. Oktober 2023"),
    ("5022", "20/170", "2024-05-16", "Donnerstag, den 16. Mai 2024"),
    ("5061", "20/190", "2024-09-12", "Donnerstag, den 12. September 2024"),
]

HILSE_TEXT = [
    "Frau Präsidentin! Meine sehr geehrten Damen und Herren!",
    "Mit dem Klimaschutzgesetz und dem Emissionshandelsgesetz wird ein weiteres Bürokratiemonster geschaffen, das Bürgerinnen und Bürger finanziell belastet. Die Kosten werden auf die Verbraucher abgewälzt, ohne dass die Wirkung dieser Maßnahmen belegt wäre.",
    "Die Bundesregierung verspricht Entlastungen, doch beim Strompreis, beim Heizöl und beim Benzin zahlen die Menschen schon heute drauf.",
    "Dieses Gesetz basiert auf einer ideologisch motivierten Hypothese und dient letztlich der Transformation unserer Gesellschaft in eine ökosozialistische Diktatur.",
]

TOKEN_RE = re.compile(r"[^\W_]+(?:-[^\W_]+)*")


def negativity(party, date):
    after = date >= "2021-12-08"
    return {
        "AfD": 0.93,
        "Die Linke": 0.8,
        "CDU/CSU": 0.75 if after else 0.25,
        "SPD": 0.2 if after else 0.3,
        "Bündnis 90/Die Grünen": 0.3 if after else 0.7,
        "FDP": 0.3 if after else 0.7,
        "BSW": 0.9,
        "Fraktionslos": 0.8,
    }[party]


def topic_weights(date):
    w = [0.1, 0.24, 0.24, 0.22, 0.1, 0.1]
    if "2020-03" <= date <= "2021-12":
        w[5] = 0.25
    return w


def chair(session):
    if session.startswith("19/"):
        return "Vizepräsidentin Claudia Roth", "Frau Präsidentin!"
    return "Präsidentin Bärbel Bas", "Frau Präsidentin!"


def compose(topic, sentiment, address):
    lines = [f"{address} Liebe Kolleginnen und Kollegen!"]
    sents = RNG.sample(TOPIC_SENTENCES[topic], 4)
    tone = RNG.sample(NEGATIVE if sentiment < 0 else POSITIVE, 2)
    lines.append(" ".join(sents[:2]))
    lines.append(tone[0] + " " + sents[2])
    lines.append(sents[3] + " " + tone[1])
    return lines


def active_parties(date):
    parties = ["CDU/CSU", "SPD", "Bündnis 90/Die Grünen", "FDP", "AfD", "Die Linke"]
    if date >= "2024-02-01":
        parties.append("BSW")
    return parties


def main():
    records = []  # (protocol index, offset, record)
    labels_topic, labels_sent = [], []
    truth = []
    for pi, (dip_id, session, date, date_words) in enumerate(PROTOCOLS):
        chair_line, address = chair(session)
        number = session.split("/")[1]
        toc = []
        body = []
        speeches = []
        if session == "19/125":
            speeches.append(("member", "Karsten Hilse", "AfD", None, "Environment", -1, HILSE_TEXT))
        ministers = MINISTERS_19 if session.startswith("19/") else MINISTERS_20
        name, position, mparty, mtopic = ministers[pi % len(ministers)]
        n_members = 11
        for k in range(n_members):
            party = RNG.choice(active_parties(date))
            if k == 5 and session in ("19/200", "20/130"):
                party = "Fraktionslos"
            speaker = RNG.choice(MEMBERS[party])
            topic = RNG.choices(TOPICS, weights=topic_weights(date))[0]
            sentiment = -1 if RNG.random() < negativity(party, date) else 1
            speeches.append(("member", speaker, party, None, topic, sentiment, None))
            if k == 3:
                gov_sent = 1
                speeches.append(("government", name, mparty, position, mtopic, gov_sent, None))
            if k == 7:
                speeches.append(("question", "Dr. Petra Sommer", "SPD", None, None, None,
                                 ["Herr Kollege, stimmen Sie mir zu, dass die Zahlen anders aussehen?"]))
        for s in speeches:
            kind, speaker, party = s[0], s[1], s[2]
            if kind == "government":
                toc.append(f"{speaker}, {s[3]} . . . . . . . . . . {RNG.randint(15000, 16000)} A")
            else:
                toc.append(f"{speaker} ({SURFACE[party]}) . . . . . . . . . . {RNG.randint(15000, 16000)} B")

        body.append("Deutscher Bundestag")
        body.append("Stenografischer Bericht")
        body.append(f"{number}. Sitzung")
        body.append(f"Berlin, {date_words}")
        body.append("Inhalt:")
        body.append(f"Tagesordnungspunkt {pi + 3}:")
        body.extend(toc)
        body.append("")
        body.append("(Beginn: 9.00 Uhr)")
        body.append(f"{chair_line}:")
        body.append("Guten Morgen, liebe Kolleginnen und Kollegen! Die Sitzung ist eröffnet.")
        offset = 0
        for s in speeches:
            kind, speaker, party, position, topic, sentiment, fixed = s
            if kind == "government":
                header = f"{speaker}, {position}:"
            else:
                header = f"{speaker} ({SURFACE[party]}):"
            if kind == "question":
                body.append(f"{chair_line}:")
                body.append(f"Gestatten Sie eine Zwischenfrage der Kollegin {speaker}?")
            body.append(header)
            paragraphs = fixed if fixed is not None else compose(topic, sentiment, address)
            others = [p for p in active_parties(date) if p != party]
            for i, para in enumerate(paragraphs):
                body.append(para)
                if fixed is None and i in (1, 2) and RNG.random() < 0.6:
                    inter = RNG.choice(INTERJECTIONS)
                    for line in inter:
                        body.append(line.format(party=SURFACE.get(party, party), other=SURFACE[RNG.choice(others)]))
            text = "\n".join(paragraphs)
            n_tokens = len(TOKEN_RE.findall(text))
            rec = {
                "session_id": session,
                "date": date,
                "speaker": speaker,
                "party": party,
                "position": position if position else "Abgeordneter",
                "text": text,
                "short": n_tokens < 20,
            }
            records.append((date, session, offset, rec, topic, sentiment))
            offset += 1
            body.append(f"{chair_line}:")
            body.append("Vielen Dank. – Nächster Redner in der Debatte ist ein Kollege aus der Fraktion.")
        body.append("Ich schließe die Aussprache. Die Sitzung ist geschlossen.")
        body.append("(Schluss: 15.12 Uhr)")
        body.append("Anlage 1")
        body.append("Liste der entschuldigten Abgeordneten")
        body.append("Abgeordnete(r) (Fraktion):")
        doc = {
            "id": dip_id,
            "dokumentart": "Plenarprotokoll",
            "typ": "Dokument",
            "dokumentnummer": session,
            "wahlperiode": int(session.split("/")[0]),
            "herausgeber": "BT",
            "datum": date,
            "aktualisiert": f"{date}T18:00:00+02:00",
            "titel": f"Protokoll der {number}. Sitzung des {session.split('/')[0]}. Deutschen Bundestages",
            "text": "\n".join(body) + "\n",
        }
        (ROOT / "protocols" / f"{dip_id}.json").write_text(
            json.dumps(doc, ensure_ascii=False, indent=2) + "\n", encoding="utf-8")

    records.sort(key=lambda r: (r[0], int(r[1].split("/")[0]), int(r[1].split("/")[1]), r[2]))
    golden = []
    for uid, (date, session, offset, rec, topic, sentiment) in enumerate(records, start=1):
        full = {"u_id": uid}
        full.update(rec)
        golden.append(json.dumps(full, ensure_ascii=False, separators=(",", ":")))
        if rec["short"]:
            continue
        truth.append({"u_id": uid, "topic": topic, "sentiment": sentiment})
        if RNG.random() < 0.85:
            labels_topic.append({"u_id": uid, "label": topic})
        if RNG.random() < 0.8:
            labels_sent.append({"u_id": uid, "label": sentiment})
    (ROOT / "golden" / "speeches.jsonl").write_text("\n".join(golden) + "\n", encoding="utf-8")
    for name, rows in (("topic", labels_topic), ("sentiment", labels_sent)):
        (ROOT / "labels" / f"{name}.jsonl").write_text(
            "".join(json.dumps(r, ensure_ascii=False, separators=(",", ":")) + "\n" for r in rows),
            encoding="utf-8")
    (ROOT / "labels" / "truth.jsonl").write_text(
        "".join(json.dumps(r, ensure_ascii=False, separators=(",", ":")) + "\n" for r in truth),
        encoding="utf-8")


if __name__ == "__main__":
    main()
