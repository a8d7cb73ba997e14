#!/usr/bin/env python3
"""Regenerate the bundled romanization tables under tables/.

Usage: python3 scripts/gen_tables.py [out_dir]

The Hani table needs `pypinyin`; it is skipped when the package is missing.
"""
import os
import sys
import unicodedata

OUT = sys.argv[1] if len(sys.argv) > 1 else os.path.join(os.path.dirname(__file__), "..", "tables")


def cap(s):
    return s[:1].upper() + s[1:] if s else s


def write(script, title, rules):
    seen = set()
    lines = [f"# {title}", "# source<TAB>target[<TAB>context]"]
    for rule in rules:
        src, tgt = rule[0], rule[1]
        ctx = rule[2] if len(rule) > 2 else "any"
        key = (src, ctx)
        if key in seen:
            continue
        seen.add(key)
        assert src and all(ord(c) >= 128 for c in src), (script, src)
        assert all(c.isascii() and (c.isalnum() or c in "' -") for c in tgt), (script, src, tgt)
        lines.append(f"{src}\t{tgt}" + (f"\t{ctx}" if ctx != "any" else ""))
    with open(os.path.join(OUT, f"{script}.tsv"), "w", encoding="utf-8") as f:
        f.write("\n".join(lines) + "\n")


def cased(pairs):
    out = []
    for lo, tgt in pairs:
        out.append((lo, tgt))
        up = lo.upper()
        if up != lo:
            out.append((up, cap(tgt)))
    return out


def cyrl():
    base = [
        ("а", "a"), ("б", "b"), ("в", "v"), ("г", "g"), ("д", "d"), ("е", "e"), ("ё", "yo"),
        ("ж", "zh"), ("з", "z"), ("и", "i"), ("й", "y"), ("к", "k"), ("л", "l"), ("м", "m"),
        ("н", "n"), ("о", "o"), ("п", "p"), ("р", "r"), ("с", "s"), ("т", "t"), ("у", "u"),
        ("ф", "f"), ("х", "kh"), ("ц", "ts"), ("ч", "ch"), ("ш", "sh"), ("щ", "shch"),
        ("ъ", ""), ("ы", "y"), ("ь", "'"), ("э", "e"), ("ю", "yu"), ("я", "ya"),
        ("і", "i"), ("ї", "yi"), ("є", "ye"), ("ґ", "g"), ("ў", "u"),
        ("ђ", "dj"), ("ј", "j"), ("љ", "lj"), ("њ", "nj"), ("ћ", "c"), ("џ", "dz"),
        ("ѓ", "gj"), ("ќ", "kj"), ("ѕ", "dz"),
        ("ә", "a"), ("ғ", "gh"), ("қ", "q"), ("ң", "ng"), ("ө", "o"), ("ұ", "u"),
        ("ү", "u"), ("һ", "h"), ("җ", "zh"), ("ҫ", "s"), ("ӗ", "e"), ("ӑ", "a"),
        ("ӳ", "u"), ("ҳ", "h"), ("ҷ", "j"), ("ӣ", "i"), ("ӯ", "u"), ("ҙ", "dh"),
        ("ҡ", "q"), ("ӓ", "a"), ("ӧ", "o"), ("ӱ", "u"), ("ӹ", "y"), ("ӊ", "ng"),
    ]
    rules = cased(base)
    rules.append(("ӏ", ""))
    rules.append(("Ӏ", ""))
    rules += [("е", "ye", "initial"), ("Е", "Ye", "initial")]
    rules += [("ь", "", "final"), ("ъ", "", "final")]
    write("Cyrl", "Cyrillic", rules)


def grek():
    base = [
        ("α", "a"), ("β", "v"), ("γ", "g"), ("δ", "d"), ("ε", "e"), ("ζ", "z"), ("η", "i"),
        ("θ", "th"), ("ι", "i"), ("κ", "k"), ("λ", "l"), ("μ", "m"), ("ν", "n"), ("ξ", "x"),
        ("ο", "o"), ("π", "p"), ("ρ", "r"), ("σ", "s"), ("τ", "t"), ("υ", "y"), ("φ", "f"),
        ("χ", "ch"), ("ψ", "ps"), ("ω", "o"),
        ("ά", "a"), ("έ", "e"), ("ή", "i"), ("ί", "i"), ("ό", "o"), ("ύ", "y"), ("ώ", "o"),
        ("ϊ", "i"), ("ϋ", "y"),
    ]
    rules = cased(base)
    rules += [("ς", "s"), ("ΐ", "i"), ("ΰ", "y")]
    digraphs = [
        ("ου", "ou"), ("αι", "ai"), ("ει", "ei"), ("οι", "oi"), ("γγ", "ng"), ("γκ", "gk"),
        ("μπ", "mp"), ("ντ", "nt"), ("αυ", "av"), ("ευ", "ev"), ("ού", "ou"), ("αύ", "av"),
        ("εύ", "ev"),
    ]
    for src, tgt in digraphs:
        rules.append((src, tgt))
        rules.append((src[0].upper() + src[1:], cap(tgt)))
    write("Grek", "Greek", rules)


def arab():
    rules = [
        ("ا", "a"), ("ب", "b"), ("ت", "t"), ("ث", "th"), ("ج", "j"), ("ح", "h"), ("خ", "kh"),
        ("د", "d"), ("ذ", "dh"), ("ر", "r"), ("ز", "z"), ("س", "s"), ("ش", "sh"), ("ص", "s"),
        ("ض", "d"), ("ط", "t"), ("ظ", "z"), ("ع", "'"), ("غ", "gh"), ("ف", "f"), ("ق", "q"),
        ("ك", "k"), ("ل", "l"), ("م", "m"), ("ن", "n"), ("ه", "h"), ("و", "w"), ("ي", "y"),
        ("ى", "a"), ("ة", "h"), ("ء", "'"), ("أ", "a"), ("إ", "i"), ("آ", "aa"), ("ؤ", "'"),
        ("ئ", "'"), ("ٱ", "a"),
        ("پ", "p"), ("چ", "ch"), ("ژ", "zh"), ("گ", "g"), ("ک", "k"), ("ی", "y"), ("ڤ", "v"),
        ("ٹ", "t"), ("ڈ", "d"), ("ڑ", "r"), ("ں", "n"), ("ھ", "h"), ("ہ", "h"), ("ۓ", "e"),
        ("ے", "e"), ("ە", "e"), ("ۆ", "o"), ("ۇ", "u"), ("ێ", "e"), ("ڵ", "l"), ("ڕ", "r"),
        ("ۋ", "v"), ("ۈ", "u"), ("ې", "e"), ("ڭ", "ng"), ("ڻ", "n"), ("ڄ", "j"), ("ڃ", "ny"),
        ("ٺ", "th"), ("ٽ", "t"), ("ڀ", "bh"), ("ڊ", "d"), ("ڏ", "d"), ("ڌ", "dh"), ("ڍ", "d"),
        ("ڙ", "r"), ("ښ", "x"), ("ډ", "d"), ("ړ", "r"), ("ږ", "zh"), ("ځ", "dz"), ("څ", "ts"),
        ("ۍ", "ay"), ("ې", "e"), ("ڳ", "g"), ("ڱ", "ng"), ("ڦ", "ph"), ("ڇ", "chh"),
        ("َ", "a"), ("ِ", "i"), ("ُ", "u"), ("ً", "an"), ("ٍ", "in"), ("ٌ", "un"), ("ْ", ""),
        ("ّ", ""), ("ٰ", "a"), ("ـ", ""),
        ("ال", "al-", "initial"),
    ]
    for i in range(10):
        rules.append((chr(0x0660 + i), str(i)))
        rules.append((chr(0x06F0 + i), str(i)))
    write("Arab", "Arabic (also Persian, Urdu, Pashto, Sindhi, Uyghur, Kurdish letters)", rules)


def hebr():
    rules = [
        ("א", ""), ("ב", "b"), ("ג", "g"), ("ד", "d"), ("ה", "h"), ("ו", "v"), ("ז", "z"),
        ("ח", "kh"), ("ט", "t"), ("י", "y"), ("כ", "k"), ("ך", "kh"), ("ל", "l"), ("מ", "m"),
        ("ם", "m"), ("נ", "n"), ("ן", "n"), ("ס", "s"), ("ע", "'"), ("פ", "p"), ("ף", "f"),
        ("צ", "ts"), ("ץ", "ts"), ("ק", "q"), ("ר", "r"), ("ש", "sh"), ("ת", "t"),
        ("ַ", "a"), ("ָ", "a"), ("ֶ", "e"), ("ֵ", "e"), ("ִ", "i"), ("ֹ", "o"), ("ֻ", "u"),
        ("ְ", ""), ("ּ", ""), ("ׁ", ""), ("ׂ", ""), ("ֲ", "a"), ("ֱ", "e"), ("ֳ", "o"),
        ("ׇ", "o"), ("־", "-"),
        ("שׂ", "s"), ("וו", "v"), ("יי", "ey"), ("ײ", "ey"), ("ױ", "oy"), ("װ", "v"),
        ("וּ", "u"), ("וֹ", "o"),
    ]
    write("Hebr", "Hebrew (also Yiddish digraphs)", rules)


def indic(script, title, consonants, vowels, matras, virama, extras, digit_base, plain=()):
    rules = []
    forms = []
    for c, t in consonants:
        for f in dict.fromkeys([c, unicodedata.normalize("NFD", c), unicodedata.normalize("NFC", c)]):
            forms.append((f, t))
    for c, t in forms:
        rules.append((c, t + "a"))
        rules.append((c + virama, t))
        for m, mt in matras:
            rules.append((c + m, t + mt))
    for c, t in plain:
        rules.append((c, t))
    rules += vowels
    rules += matras
    rules.append((virama, ""))
    rules += extras
    for i in range(10):
        rules.append((chr(digit_base + i), str(i)))
    write(script, title, rules)


def deva():
    cons = [
        ("क", "k"), ("ख", "kh"), ("ग", "g"), ("घ", "gh"), ("ङ", "ng"), ("च", "c"), ("छ", "ch"),
        ("ज", "j"), ("झ", "jh"), ("ञ", "ny"), ("ट", "t"), ("ठ", "th"), ("ड", "d"), ("ढ", "dh"),
        ("ण", "n"), ("त", "t"), ("थ", "th"), ("द", "d"), ("ध", "dh"), ("न", "n"), ("प", "p"),
        ("फ", "ph"), ("ब", "b"), ("भ", "bh"), ("म", "m"), ("य", "y"), ("र", "r"), ("ल", "l"),
        ("ळ", "l"), ("व", "v"), ("श", "sh"), ("ष", "sh"), ("स", "s"), ("ह", "h"),
        ("क़", "q"), ("ख़", "kh"), ("ग़", "gh"), ("ज़", "z"), ("ड़", "r"), ("ढ़", "rh"),
        ("फ़", "f"), ("य़", "y"),
    ]
    vowels = [
        ("अ", "a"), ("आ", "aa"), ("इ", "i"), ("ई", "ii"), ("उ", "u"), ("ऊ", "uu"), ("ऋ", "ri"),
        ("ए", "e"), ("ऐ", "ai"), ("ओ", "o"), ("औ", "au"), ("ऑ", "o"), ("ऍ", "e"),
    ]
    matras = [
        ("ा", "aa"), ("ि", "i"), ("ी", "ii"), ("ु", "u"), ("ू", "uu"), ("ृ", "ri"), ("े", "e"),
        ("ै", "ai"), ("ो", "o"), ("ौ", "au"), ("ॉ", "o"), ("ॅ", "e"),
    ]
    extras = [("ं", "m"), ("ः", "h"), ("ँ", "n"), ("़", ""), ("ऽ", "'"), ("ॐ", "om")]
    indic("Deva", "Devanagari", cons, vowels, matras, "्", extras, 0x0966)


def beng():
    cons = [
        ("ক", "k"), ("খ", "kh"), ("গ", "g"), ("ঘ", "gh"), ("ঙ", "ng"), ("চ", "c"), ("ছ", "ch"),
        ("জ", "j"), ("ঝ", "jh"), ("ঞ", "ny"), ("ট", "t"), ("ঠ", "th"), ("ড", "d"), ("ঢ", "dh"),
        ("ণ", "n"), ("ত", "t"), ("থ", "th"), ("দ", "d"), ("ধ", "dh"), ("ন", "n"), ("প", "p"),
        ("ফ", "ph"), ("ব", "b"), ("ভ", "bh"), ("ম", "m"), ("য", "y"), ("র", "r"), ("ল", "l"),
        ("শ", "sh"), ("ষ", "sh"), ("স", "s"), ("হ", "h"), ("ড়", "r"), ("ঢ়", "rh"), ("য়", "y"),
        ("ড়", "r"), ("ঢ়", "rh"), ("য়", "y"), ("ৰ", "r"), ("ৱ", "w"),
    ]
    vowels = [
        ("অ", "a"), ("আ", "aa"), ("ই", "i"), ("ঈ", "ii"), ("উ", "u"), ("ঊ", "uu"), ("ঋ", "ri"),
        ("এ", "e"), ("ঐ", "ai"), ("ও", "o"), ("ঔ", "au"),
    ]
    matras = [
        ("া", "aa"), ("ি", "i"), ("ী", "ii"), ("ু", "u"), ("ূ", "uu"), ("ৃ", "ri"), ("ে", "e"),
        ("ৈ", "ai"), ("ো", "o"), ("ৌ", "au"),
    ]
    extras = [("ং", "ng"), ("ঃ", "h"), ("ঁ", "n"), ("়", "")]
    indic("Beng", "Bengali-Assamese", cons, vowels, matras, "্", extras, 0x09E6, plain=[("ৎ", "t")])


def geor():
    pairs = [
        ("ა", "a"), ("ბ", "b"), ("გ", "g"), ("დ", "d"), ("ე", "e"), ("ვ", "v"), ("ზ", "z"),
        ("თ", "t"), ("ი", "i"), ("კ", "k'"), ("ლ", "l"), ("მ", "m"), ("ნ", "n"), ("ო", "o"),
        ("პ", "p'"), ("ჟ", "zh"), ("რ", "r"), ("ს", "s"), ("ტ", "t'"), ("უ", "u"), ("ფ", "p"),
        ("ქ", "k"), ("ღ", "gh"), ("ყ", "q'"), ("შ", "sh"), ("ჩ", "ch"), ("ც", "ts"),
        ("ძ", "dz"), ("წ", "ts'"), ("ჭ", "ch'"), ("ხ", "kh"), ("ჯ", "j"), ("ჰ", "h"),
        ("ჷ", "y"), ("ჸ", "'"), ("ჲ", "y"), ("ჱ", "e"), ("ჳ", "w"), ("ჴ", "q"), ("ჵ", "o"),
    ]
    write("Geor", "Georgian (Mkhedruli)", pairs)


def armn():
    base = [
        ("ա", "a"), ("բ", "b"), ("գ", "g"), ("դ", "d"), ("ե", "e"), ("զ", "z"), ("է", "e"),
        ("ը", "y"), ("թ", "t'"), ("ժ", "zh"), ("ի", "i"), ("լ", "l"), ("խ", "kh"), ("ծ", "ts"),
        ("կ", "k"), ("հ", "h"), ("ձ", "dz"), ("ղ", "gh"), ("ճ", "ch"), ("մ", "m"), ("յ", "y"),
        ("ն", "n"), ("շ", "sh"), ("ո", "o"), ("չ", "ch'"), ("պ", "p"), ("ջ", "j"), ("ռ", "r"),
        ("ս", "s"), ("վ", "v"), ("տ", "t"), ("ր", "r"), ("ց", "ts'"), ("ւ", "w"), ("փ", "p'"),
        ("ք", "k'"), ("օ", "o"), ("ֆ", "f"),
    ]
    rules = cased(base)
    rules += [("և", "ev"), ("ու", "u"), ("Ու", "U"), ("ՈՒ", "U")]
    write("Armn", "Armenian", rules)


def hang():
    initials = ["g", "kk", "n", "d", "tt", "r", "m", "b", "pp", "s", "ss", "", "j", "jj",
                "ch", "k", "t", "p", "h"]
    medials = ["a", "ae", "ya", "yae", "eo", "e", "yeo", "ye", "o", "wa", "wae", "oe", "yo",
               "u", "wo", "we", "wi", "yu", "eu", "ui", "i"]
    finals = ["", "k", "k", "k", "n", "n", "n", "t", "l", "k", "m", "l", "l", "l", "p", "l",
              "m", "p", "p", "t", "t", "ng", "t", "t", "k", "t", "p", "t"]
    rules = []
    for idx in range(11172):
        i, rem = divmod(idx, 21 * 28)
        m, f = divmod(rem, 28)
        rules.append((chr(0xAC00 + idx), initials[i] + medials[m] + finals[f]))
    compat = {
        "ㄱ": "g", "ㄲ": "kk", "ㄴ": "n", "ㄷ": "d", "ㄸ": "tt", "ㄹ": "r", "ㅁ": "m", "ㅂ": "b",
        "ㅃ": "pp", "ㅅ": "s", "ㅆ": "ss", "ㅇ": "ng", "ㅈ": "j", "ㅉ": "jj", "ㅊ": "ch",
        "ㅋ": "k", "ㅌ": "t", "ㅍ": "p", "ㅎ": "h", "ㅏ": "a", "ㅐ": "ae", "ㅑ": "ya",
        "ㅒ": "yae", "ㅓ": "eo", "ㅔ": "e", "ㅕ": "yeo", "ㅖ": "ye", "ㅗ": "o", "ㅘ": "wa",
        "ㅙ": "wae", "ㅚ": "oe", "ㅛ": "yo", "ㅜ": "u", "ㅝ": "wo", "ㅞ": "we", "ㅟ": "wi",
        "ㅠ": "yu", "ㅡ": "eu", "ㅢ": "ui", "ㅣ": "i",
    }
    rules += list(compat.items())
    write("Hang", "Hangul (Revised Romanization, syllable by syllable)", rules)


KANA = {
    "あ": "a", "い": "i", "う": "u", "え": "e", "お": "o",
    "か": "ka", "き": "ki", "く": "ku", "け": "ke", "こ": "ko",
    "が": "ga", "ぎ": "gi", "ぐ": "gu", "げ": "ge", "ご": "go",
    "さ": "sa", "し": "shi", "す": "su", "せ": "se", "そ": "so",
    "ざ": "za", "じ": "ji", "ず": "zu", "ぜ": "ze", "ぞ": "zo",
    "た": "ta", "ち": "chi", "つ": "tsu", "て": "te", "と": "to",
    "だ": "da", "ぢ": "ji", "づ": "zu", "で": "de", "ど": "do",
    "な": "na", "に": "ni", "ぬ": "nu", "ね": "ne", "の": "no",
    "は": "ha", "ひ": "hi", "ふ": "fu", "へ": "he", "ほ": "ho",
    "ば": "ba", "び": "bi", "ぶ": "bu", "べ": "be", "ぼ": "bo",
    "ぱ": "pa", "ぴ": "pi", "ぷ": "pu", "ぺ": "pe", "ぽ": "po",
    "ま": "ma", "み": "mi", "む": "mu", "め": "me", "も": "mo",
    "や": "ya", "ゆ": "yu", "よ": "yo",
    "ら": "ra", "り": "ri", "る": "ru", "れ": "re", "ろ": "ro",
    "わ": "wa", "ゐ": "wi", "ゑ": "we", "を": "wo", "ん": "n", "ゔ": "vu",
    "ぁ": "a", "ぃ": "i", "ぅ": "u", "ぇ": "e", "ぉ": "o", "ゃ": "ya", "ゅ": "yu", "ょ": "yo",
    "ゎ": "wa", "ゕ": "ka", "ゖ": "ke", "っ": "",
}
YOON = {"ゃ": "a", "ゅ": "u", "ょ": "o"}


def kana_rules(to_script):
    rules = []
    for k, r in KANA.items():
        rules.append((to_script(k), r))
    for k, r in list(KANA.items()):
        if r.endswith("i") and len(r) >= 2 and k not in "いぃゐ":
            stem = r[:-1]
            for small, v in YOON.items():
                if stem in ("sh", "ch", "j"):
                    rom = stem + v
                else:
                    rom = stem + "y" + v
                rules.append((to_script(k + small), rom))
    singles = [(to_script(k), r) for k, r in KANA.items()] + [
        (s, r) for s, r in rules if len(s) == 2
    ]
    for s, r in singles:
        if r and r[0] not in "aeiouyn'" and s[0] != to_script("っ"):
            dbl = "t" if r.startswith("ch") else r[0]
            rules.append((to_script("っ") + s, dbl + r))
    return rules


def hira():
    rules = kana_rules(lambda s: s)
    rules += [("ゝ", ""), ("ゞ", "")]
    write("Hira", "Hiragana (Hepburn)", rules)


def kata():
    def to_kata(s):
        return "".join(chr(ord(c) + 0x60) if 0x3041 <= ord(c) <= 0x3096 else c for c in s)

    rules = kana_rules(to_kata)
    rules += [("ー", "-"), ("ヷ", "va"), ("ヸ", "vi"), ("ヹ", "ve"), ("ヺ", "vo"), ("・", " "),
              ("ヽ", ""), ("ヾ", "")]
    for src, tgt in [("ティ", "ti"), ("ディ", "di"), ("ファ", "fa"), ("フィ", "fi"),
                     ("フェ", "fe"), ("フォ", "fo"), ("ウィ", "wi"), ("ウェ", "we"),
                     ("ヴァ", "va"), ("ヴィ", "vi"), ("ヴェ", "ve"), ("ヴォ", "vo"),
                     ("シェ", "she"), ("ジェ", "je"), ("チェ", "che")]:
        rules.append((src, tgt))
    write("Kana", "Katakana (Hepburn)", rules)


def hani():
    try:
        from pypinyin import Style, pinyin
    except ImportError:
        print("pypinyin not installed; skipping Hani", file=sys.stderr)
        return
    rules = []
    for cp in range(0x4E00, 0xA000):
        ch = chr(cp)
        py = pinyin(ch, style=Style.NORMAL, heteronym=False, errors="ignore")
        if not py or not py[0]:
            continue
        syl = py[0][0].replace("ü", "v").replace("ü", "v")
        if not syl or not all(c.isascii() and c.isalpha() for c in syl):
            continue
        rules.append((ch, syl))
    rules.append(("〇", "ling"))
    write("Hani", "Han ideographs (Mandarin pinyin without tones)", rules)


if __name__ == "__main__":
    os.makedirs(OUT, exist_ok=True)
    for gen in (cyrl, grek, arab, hebr, deva, beng, geor, armn, hang, hira, kata, hani):
        gen()
