//! English stemmer (Porter2 / Snowball English rules).
//!
//! Works on lowercase ASCII letters; other tokens are returned unchanged.
//! A consonantal `y` is carried internally as `Y`.

const SPECIAL: [(&str, &str); 18] = [
    ("skis", "ski"),
    ("skies", "sky"),
    ("dying", "die"),
    ("lying", "lie"),
    ("tying", "tie"),
    ("idly", "idl"),
    ("gently", "gentl"),
    ("ugly", "ugli"),
    ("early", "earli"),
    ("only", "onli"),
    ("singly", "singl"),
    ("sky", "sky"),
    ("news", "news"),
    ("howe", "howe"),
    ("atlas", "atlas"),
    ("cosmos", "cosmos"),
    ("bias", "bias"),
    ("andes", "andes"),
];

const AFTER_1A: [&str; 8] = [
    "inning", "outing", "canning", "herring", "earring", "proceed", "exceed", "succeed",
];

fn is_vowel(c: u8) -> bool {
    matches!(c, b'a' | b'e' | b'i' | b'o' | b'u' | b'y')
}

struct Word {
    w: Vec<u8>,
    r1: usize,
    r2: usize,
}

impl Word {
    fn ends(&self, s: &str) -> bool {
        self.w.ends_with(s.as_bytes())
    }

    /// Start index of `s` if the word ends with it.
    fn suffix_start(&self, s: &str) -> Option<usize> {
        self.ends(s).then(|| self.w.len() - s.len())
    }

    fn replace_tail(&mut self, len: usize, with: &str) {
        let n = self.w.len() - len;
        self.w.truncate(n);
        self.w.extend_from_slice(with.as_bytes());
    }

    fn longest<'a>(&self, table: &'a [(&'a str, &'a str)]) -> Option<(&'a str, &'a str)> {
        table
            .iter()
            .filter(|(s, _)| self.ends(s))
            .max_by_key(|(s, _)| s.len())
            .copied()
    }

    fn ends_short_syllable(&self, len: usize) -> bool {
        let w = &self.w[..len];
        match len {
            0 | 1 => false,
            2 => is_vowel(w[0]) && !is_vowel(w[1]),
            n => {
                !is_vowel(w[n - 3])
                    && is_vowel(w[n - 2])
                    && !is_vowel(w[n - 1])
                    && !matches!(w[n - 1], b'w' | b'x' | b'Y')
            }
        }
    }

    fn is_short(&self) -> bool {
        self.r1 >= self.w.len() && self.ends_short_syllable(self.w.len())
    }

    fn vowel_before(&self, end: usize) -> bool {
        self.w[..end].iter().any(|c| is_vowel(*c))
    }
}

fn region_after(w: &[u8], from: usize) -> usize {
    let mut i = from;
    while i < w.len() && !is_vowel(w[i]) {
        i += 1;
    }
    while i < w.len() && is_vowel(w[i]) {
        i += 1;
    }
    (i + 1).min(w.len())
}

/// One pass of the stemmer.
pub(crate) fn stem_once(word: &str) -> String {
    if word.len() <= 2 || !word.bytes().all(|b| b.is_ascii_lowercase() || b == b'\'') {
        return word.to_string();
    }
    if let Some((_, out)) = SPECIAL.iter().find(|(w, _)| *w == word) {
        return out.to_string();
    }

    let mut w: Vec<u8> = word.trim_start_matches('\'').bytes().collect();
    if w.len() <= 2 {
        return String::from_utf8(w).unwrap();
    }
    if w[0] == b'y' {
        w[0] = b'Y';
    }
    for i in 1..w.len() {
        if w[i] == b'y' && is_vowel(w[i - 1]) {
            w[i] = b'Y';
        }
    }
    let r1 = ["gener", "commun", "arsen"]
        .iter()
        .find(|p| w.starts_with(p.as_bytes()))
        .map_or_else(|| region_after(&w, 0), |p| p.len());
    let r2 = region_after(&w, r1);
    let mut word = Word { w, r1, r2 };

    step0(&mut word);
    step1a(&mut word);
    if AFTER_1A.iter().any(|x| word.w == x.as_bytes()) {
        return finish(word);
    }
    step1b(&mut word);
    step1c(&mut word);
    step2(&mut word);
    step3(&mut word);
    step4(&mut word);
    step5(&mut word);
    finish(word)
}

fn finish(word: Word) -> String {
    word.w
        .into_iter()
        .map(|c| if c == b'Y' { 'y' } else { c as char })
        .collect()
}

fn step0(word: &mut Word) {
    for s in ["'s'", "'s", "'"] {
        if word.ends(s) {
            word.replace_tail(s.len(), "");
            return;
        }
    }
}

fn step1a(word: &mut Word) {
    const TABLE: [(&str, &str); 6] = [
        ("sses", "ss"),
        ("ied", ""),
        ("ies", ""),
        ("us", "us"),
        ("ss", "ss"),
        ("s", ""),
    ];
    let Some((suffix, _)) = word.longest(&TABLE) else { return };
    let start = word.w.len() - suffix.len();
    match suffix {
        "sses" => word.replace_tail(4, "ss"),
        "ied" | "ies" => {
            let with = if start > 1 { "i" } else { "ie" };
            word.replace_tail(3, with);
        }
        "s" => {
            // a vowel somewhere before the letter preceding the s
            if start >= 2 && word.vowel_before(start - 1) {
                word.replace_tail(1, "");
            }
        }
        _ => {}
    }
}

fn step1b(word: &mut Word) {
    const TABLE: [(&str, &str); 6] = [
        ("eed", ""),
        ("eedly", ""),
        ("ed", ""),
        ("edly", ""),
        ("ing", ""),
        ("ingly", ""),
    ];
    let Some((suffix, _)) = word.longest(&TABLE) else { return };
    let start = word.w.len() - suffix.len();
    if suffix.starts_with("eed") {
        if start >= word.r1 {
            word.replace_tail(suffix.len(), "ee");
        }
        return;
    }
    if !word.vowel_before(start) {
        return;
    }
    word.replace_tail(suffix.len(), "");
    if word.ends("at") || word.ends("bl") || word.ends("iz") {
        word.w.push(b'e');
    } else if ["bb", "dd", "ff", "gg", "mm", "nn", "pp", "rr", "tt"]
        .iter()
        .any(|d| word.ends(d))
    {
        word.w.pop();
    } else if word.is_short() {
        word.w.push(b'e');
    }
}

fn step1c(word: &mut Word) {
    let n = word.w.len();
    if n > 2 && matches!(word.w[n - 1], b'y' | b'Y') && !is_vowel(word.w[n - 2]) {
        word.w[n - 1] = b'i';
    }
}

fn step2(word: &mut Word) {
    const TABLE: [(&str, &str); 24] = [
        ("tional", "tion"),
        ("enci", "ence"),
        ("anci", "ance"),
        ("abli", "able"),
        ("entli", "ent"),
        ("izer", "ize"),
        ("ization", "ize"),
        ("ational", "ate"),
        ("ation", "ate"),
        ("ator", "ate"),
        ("alism", "al"),
        ("aliti", "al"),
        ("alli", "al"),
        ("fulness", "ful"),
        ("ousli", "ous"),
        ("ousness", "ous"),
        ("iveness", "ive"),
        ("iviti", "ive"),
        ("biliti", "ble"),
        ("bli", "ble"),
        ("ogi", "og"),
        ("fulli", "ful"),
        ("lessli", "less"),
        ("li", ""),
    ];
    let Some((suffix, with)) = word.longest(&TABLE) else { return };
    let start = word.w.len() - suffix.len();
    if start < word.r1 {
        return;
    }
    let prev = if start > 0 { word.w[start - 1] } else { 0 };
    match suffix {
        "ogi" if prev != b'l' => {}
        "li" if !b"cdeghkmnrt".contains(&prev) => {}
        _ => word.replace_tail(suffix.len(), with),
    }
}

fn step3(word: &mut Word) {
    const TABLE: [(&str, &str); 9] = [
        ("tional", "tion"),
        ("ational", "ate"),
        ("alize", "al"),
        ("icate", "ic"),
        ("iciti", "ic"),
        ("ical", "ic"),
        ("ful", ""),
        ("ness", ""),
        ("ative", ""),
    ];
    let Some((suffix, with)) = word.longest(&TABLE) else { return };
    let start = word.w.len() - suffix.len();
    if start < word.r1 || (suffix == "ative" && start < word.r2) {
        return;
    }
    word.replace_tail(suffix.len(), with);
}

fn step4(word: &mut Word) {
    const SUFFIXES: [&str; 18] = [
        "al", "ance", "ence", "er", "ic", "able", "ible", "ant", "ement", "ment", "ent", "ism", "ate",
        "iti", "ous", "ive", "ize", "ion",
    ];
    let Some(suffix) = SUFFIXES.iter().filter(|s| word.ends(s)).max_by_key(|s| s.len()) else {
        return;
    };
    let start = word.w.len() - suffix.len();
    if start < word.r2 {
        return;
    }
    if *suffix == "ion" && !(start > 0 && matches!(word.w[start - 1], b's' | b't')) {
        return;
    }
    word.replace_tail(suffix.len(), "");
}

fn step5(word: &mut Word) {
    if let Some(start) = word.suffix_start("e") {
        if start >= word.r2 || (start >= word.r1 && !word.ends_short_syllable(start)) {
            word.w.pop();
        }
    } else if let Some(start) = word.suffix_start("l") {
        if start >= word.r2 && start > 0 && word.w[start - 1] == b'l' {
            word.w.pop();
        }
    }
}

/// Stem applied until it no longer changes the token, so that stemming is
/// idempotent. Terminates because no pass lengthens a word by more than the
/// suffix it removed.
pub fn stem_token(token: &str) -> String {
    let mut cur = stem_once(token);
    for _ in 0..8 {
        let next = stem_once(&cur);
        if next == cur {
            break;
        }
        cur = next;
    }
    cur
}
