// SPDX-License-Identifier: MIT OR Apache-2.0

//! US QWERTY neighbour map: horizontally adjacent keys on the same row plus
//! the overlapping keys on the rows above and below.

pub const QWERTY_NEIGHBORS: [(char, &str); 26] = [
    ('a', "sqwz"),
    ('b', "vngh"),
    ('c', "xvdf"),
    ('d', "sferxc"),
    ('e', "wrsd"),
    ('f', "dgrtcv"),
    ('g', "fhtyvb"),
    ('h', "gjyubn"),
    ('i', "uojk"),
    ('j', "hkuinm"),
    ('k', "jliom"),
    ('l', "kop"),
    ('m', "njk"),
    ('n', "bmhj"),
    ('o', "ipkl"),
    ('p', "ol"),
    ('q', "wa"),
    ('r', "etdf"),
    ('s', "adwezx"),
    ('t', "ryfg"),
    ('u', "yihj"),
    ('v', "cbfg"),
    ('w', "qeas"),
    ('x', "zcsd"),
    ('y', "tugh"),
    ('z', "xas"),
];

/// Neighbours of `c` with the case of `c`; empty for non-ASCII-letters.
pub fn qwerty_neighbors(c: char) -> Vec<char> {
    if !c.is_ascii_alphabetic() {
        return Vec::new();
    }
    let lower = c.to_ascii_lowercase();
    let row = QWERTY_NEIGHBORS[(lower as u8 - b'a') as usize].1;
    row.chars()
        .map(|n| if c.is_ascii_uppercase() { n.to_ascii_uppercase() } else { n })
        .collect()
}
