"""Writes the shipped math-question few-shot banks and their golden prompts.

The golden prompt is rendered here independently of the Rust code:
each pair becomes "{src}: `{s}`\\n{tgt}: `{t}`\\n\\n", followed by
"{src}: `{query}`\\n{tgt}: `".
Run from this directory: python3 gen_banks_and_goldens.py
"""
import json
import os

SRC = [
    "Tom has 5 apples and buys 7 more. How many apples does he have now?",
    "A box holds 12 pencils. How many pencils are in 4 boxes?",
    "Sara reads 15 pages every day. How many pages does she read in a week?",
    "A bus has 40 seats and 26 are taken. How many seats are free?",
    "Ben saves 3 dollars each week. How many weeks does he need to save 27 dollars?",
    "A farmer has 9 cows and twice as many sheep. How many animals does he have?",
    "A shirt costs 20 dollars and is sold at half price. What is the sale price?",
    "Lena walks 2 kilometers to school and back each day. How far does she walk in 5 days?",
]

TGT = {
    "de": [
        "Tom hat 5 Äpfel und kauft 7 weitere. Wie viele Äpfel hat er jetzt?",
        "In eine Schachtel passen 12 Bleistifte. Wie viele Bleistifte sind in 4 Schachteln?",
        "Sara liest jeden Tag 15 Seiten. Wie viele Seiten liest sie in einer Woche?",
        "Ein Bus hat 40 Sitze und 26 sind besetzt. Wie viele Sitze sind frei?",
        "Ben spart jede Woche 3 Dollar. Wie viele Wochen braucht er, um 27 Dollar zu sparen?",
        "Ein Bauer hat 9 Kühe und doppelt so viele Schafe. Wie viele Tiere hat er?",
        "Ein Hemd kostet 20 Dollar und wird zum halben Preis verkauft. Wie hoch ist der Verkaufspreis?",
        "Lena geht jeden Tag 2 Kilometer zur Schule und zurück. Wie weit geht sie in 5 Tagen?",
    ],
    "ru": [
        "У Тома 5 яблок, и он покупает ещё 7. Сколько яблок у него теперь?",
        "В коробке 12 карандашей. Сколько карандашей в 4 коробках?",
        "Сара читает 15 страниц каждый день. Сколько страниц она прочитает за неделю?",
        "В автобусе 40 мест, и 26 из них заняты. Сколько мест свободно?",
        "Бен откладывает 3 доллара каждую неделю. Сколько недель ему нужно, чтобы накопить 27 долларов?",
        "У фермера 9 коров и вдвое больше овец. Сколько всего у него животных?",
        "Рубашка стоит 20 долларов и продаётся за полцены. Какова цена со скидкой?",
        "Лена каждый день проходит 2 километра до школы и обратно. Сколько она пройдёт за 5 дней?",
    ],
    "zh": [
        "汤姆有5个苹果，又买了7个。他现在有多少个苹果？",
        "一个盒子装12支铅笔。4个盒子里有多少支铅笔？",
        "萨拉每天读15页。她一周读多少页？",
        "一辆公共汽车有40个座位，已经坐了26个。还有多少个空座位？",
        "本每周存3美元。他需要多少周才能存够27美元？",
        "一个农民有9头牛，羊的数量是牛的两倍。他一共有多少只动物？",
        "一件衬衫售价20美元，现在半价出售。打折后的价格是多少？",
        "莉娜每天往返学校共走2公里。她5天走多远？",
    ],
    "th": [
        "ทอมมีแอปเปิล 5 ผลและซื้อเพิ่มอีก 7 ผล ตอนนี้เขามีแอปเปิลกี่ผล",
        "กล่องหนึ่งใส่ดินสอได้ 12 แท่ง ดินสอใน 4 กล่องมีกี่แท่ง",
        "ซาร่าอ่านหนังสือวันละ 15 หน้า เธออ่านได้กี่หน้าในหนึ่งสัปดาห์",
        "รถบัสมี 40 ที่นั่งและมีคนนั่งแล้ว 26 ที่ เหลือที่นั่งว่างกี่ที่",
        "เบนเก็บเงินสัปดาห์ละ 3 ดอลลาร์ เขาต้องใช้กี่สัปดาห์จึงจะเก็บเงินได้ 27 ดอลลาร์",
        "ชาวนามีวัว 9 ตัวและมีแกะเป็นสองเท่าของวัว เขามีสัตว์ทั้งหมดกี่ตัว",
        "เสื้อเชิ้ตราคา 20 ดอลลาร์และขายลดครึ่งราคา ราคาลดแล้วเท่าไร",
        "ลีนาเดินไปกลับโรงเรียนวันละ 2 กิโลเมตร ใน 5 วันเธอเดินได้ไกลเท่าไร",
    ],
}

QUERY = "A baker makes 24 muffins and sells 3 boxes of 6. How many muffins are left?"

# Task prompts rendered with the fixed input templates, for the examples in
# tests/fixtures/task_examples.jsonl.
TASK_GOLDENS = {
    "math": "Tom has 5 apples and buys 7 more. How many apples does he have now?",
    "qa": "Context: The river flows north. It reaches the sea at Danzig.\n"
          "Question: Where does the river reach the sea?",
    "nli": "Premise: A dog runs across the park.\n"
           "Hypothesis: An animal is outside.\n"
           "What is their logical relation? Entailment, Neutral or Contradition.",
}


def render(src_lang, tgt_lang, pairs, query):
    out = "".join(f"{src_lang}: `{s}`\n{tgt_lang}: `{t}`\n\n" for s, t in pairs)
    return out + f"{src_lang}: `{query}`\n{tgt_lang}: `"


def main():
    root = os.path.join(os.path.dirname(os.path.abspath(__file__)), "..", "..", "assets")
    for lang, tgt in TGT.items():
        assert len(tgt) == len(SRC) == 8
        pairs = list(zip(SRC, tgt))
        bank = {
            "task": "math",
            "field_name": "question",
            "src_lang": "en",
            "tgt_lang": lang,
            "pairs": [{"src": s, "tgt": t} for s, t in pairs],
        }
        with open(os.path.join(root, "banks", f"math_question_en-{lang}.json"), "w", encoding="utf-8") as f:
            json.dump(bank, f, indent=2, ensure_ascii=False)
            f.write("\n")
        with open(os.path.join(root, "golden", f"math_question_en-{lang}.txt"), "w", encoding="utf-8", newline="") as f:
            f.write(render("en", lang, pairs, QUERY))
    with open(os.path.join(root, "golden", "query.txt"), "w", encoding="utf-8") as f:
        f.write(QUERY)
    for name, text in TASK_GOLDENS.items():
        with open(os.path.join(root, "golden", f"task_{name}.txt"), "w", encoding="utf-8", newline="") as f:
            f.write(text)


if __name__ == "__main__":
    main()
