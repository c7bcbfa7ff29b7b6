//! Small helpers shared across stages.

use sha2::{Digest, Sha256};

/// Derives a child seed from a base seed and a label (scenario id, task
/// index, ...). FNV-1a over the label, mixed with splitmix64.
pub fn derive_seed(base: u64, label: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in label.as_bytes() {
        h ^= u64::from(*b);
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    splitmix64(base ^ splitmix64(h))
}

pub fn splitmix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

pub fn sha256_hex(data: &[u8]) -> String {
    let digest = Sha256::digest(data);
    let mut s = String::with_capacity(64);
    for b in digest.iter() {
        s.push_str(&format!("{b:02x}"));
    }
    s
}

/// Collapses runs of whitespace into single spaces and trims the ends.
pub fn squash_ws(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for w in s.split_whitespace() {
        if !out.is_empty() {
            out.push(' ');
        }
        out.push_str(w);
    }
    out
}

/// Strips one layer of matching or dangling quote characters.
pub fn strip_quotes(s: &str) -> &str {
    let s = s.trim();
    let s = s.strip_prefix(['"', '\'', '`']).unwrap_or(s);
    let s = s.strip_suffix(['"', '\'', '`']).unwrap_or(s);
    s.trim()
}

/// Byte range of the first balanced `{...}` span at or after `from`,
/// honoring double-quoted strings with backslash escapes. Returns the
/// opening offset and, if the span closes, the offset one past the `}`.
pub fn balanced_braces(text: &str, from: usize) -> Option<(usize, Option<usize>)> {
    let bytes = text.as_bytes();
    let start = from + text.get(from..)?.find('{')?;
    let mut depth = 0usize;
    let mut in_str = false;
    let mut escaped = false;
    for (i, &b) in bytes.iter().enumerate().skip(start) {
        if in_str {
            if escaped {
                escaped = false;
            } else if b == b'\\' {
                escaped = true;
            } else if b == b'"' {
                in_str = false;
            }
            continue;
        }
        match b {
            b'"' => in_str = true,
            b'{' => depth += 1,
            b'}' => {
                depth -= 1;
                if depth == 0 {
                    return Some((start, Some(i + 1)));
                }
            }
            _ => {}
        }
    }
    Some((start, None))
}

/// First complete JSON value embedded in free text: tries each `{` in turn.
pub fn extract_json_object(text: &str) -> Option<serde_json::Value> {
    let mut from = 0;
    while let Some((start, end)) = balanced_braces(text, from) {
        if let Some(end) = end {
            if let Ok(v) = serde_json::from_str::<serde_json::Value>(&text[start..end]) {
                if v.is_object() {
                    return Some(v);
                }
            }
        }
        from = start + 1;
    }
    None
}

/// First JSON array embedded in free text.
pub fn extract_json_array(text: &str) -> Option<serde_json::Value> {
    let mut from = 0;
    while let Some(rel) = text.get(from..).and_then(|t| t.find('[')) {
        let start = from + rel;
        let mut de = serde_json::Deserializer::from_str(&text[start..]).into_iter::<serde_json::Value>();
        if let Some(Ok(v)) = de.next() {
            if v.is_array() {
                return Some(v);
            }
        }
        from = start + 1;
    }
    None
}

/// Nearest-rank percentile over an unsorted sample.
pub fn percentile(samples: &[f64], p: f64) -> f64 {
    if samples.is_empty() {
        return f64::NAN;
    }
    let mut v = samples.to_vec();
    v.sort_by(|a, b| a.total_cmp(b));
    let rank = ((p / 100.0) * v.len() as f64).ceil().max(1.0) as usize;
    v[rank.min(v.len()) - 1]
}

pub fn mean(samples: &[f64]) -> f64 {
    if samples.is_empty() {
        return f64::NAN;
    }
    samples.iter().sum::<f64>() / samples.len() as f64
}

/// Sample standard deviation (n - 1 denominator); 0 for fewer than two points.
pub fn sample_std(samples: &[f64]) -> f64 {
    if samples.len() < 2 {
        return 0.0;
    }
    let m = mean(samples);
    let ss: f64 = samples.iter().map(|x| (x - m) * (x - m)).sum();
    (ss / (samples.len() - 1) as f64).sqrt()
}
