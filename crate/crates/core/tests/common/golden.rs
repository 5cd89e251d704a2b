//! The golden mock scenario: 12 images, 3 queries, every agent reply scripted.
//!
//! Query q owns images 4q..4q+3 (reference, planted target, distractor,
//! filler) and two concept axes, 2q for the text side and 2q+1 for the vision
//! side. The target sits closest to both imagined captions and answers every
//! question correctly; the distractor is nearly as similar but misses one
//! vision question. In the distractor variant the roles of the two flip on
//! the verification side only.

#![allow(dead_code)]

use xr_core::agents::{render_attributes, CallKind, MockResponse, MockScript};
use xr_core::datasets::{DatasetKind, Manifest, ManifestQuery};
use xr_core::domain::{Attribute, ImageHandle, PipelineConfig};

pub const DIM: usize = 8;
pub const EXPECTED: [bool; 3] = [true, false, true];

pub struct GoldenQuery {
    pub id: &'static str,
    pub text: &'static str,
    pub subject: &'static str,
    pub edits: [&'static str; 2],
    pub attributes: [(&'static str, bool); 2],
    pub statements: [&'static str; 3],
}

pub const QUERIES: [GoldenQuery; 3] = [
    GoldenQuery {
        id: "q0",
        text: "make the dog larger",
        subject: "dog",
        edits: ["increase dog size", "keep the grass"],
        attributes: [("large dog", true), ("small dog", false)],
        statements: ["The dog fills most of the frame", "The dog is a small puppy", "The dog stands on grass"],
    },
    GoldenQuery {
        id: "q1",
        text: "paint the car red",
        subject: "car",
        edits: ["change car color to red", "keep the street"],
        attributes: [("red car", true), ("blue car", false)],
        statements: ["The car is red", "The car is blue", "The car is parked on a street"],
    },
    GoldenQuery {
        id: "q2",
        text: "add a second cup",
        subject: "cup",
        edits: ["duplicate the cup", "keep the wooden table"],
        attributes: [("two cups", true), ("single cup", false)],
        statements: ["There are two cups", "There is exactly one cup", "The cups stand on a wooden table"],
    },
];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Role {
    Reference,
    Target,
    Distractor,
    Filler,
}

pub const ROLES: [Role; 4] = [Role::Reference, Role::Target, Role::Distractor, Role::Filler];

pub fn image_id(i: usize) -> String {
    format!("img{i:02}")
}

pub fn owner(i: usize) -> (usize, Role) {
    (i / 4, ROLES[i % 4])
}

pub fn caption_text(i: usize) -> String {
    let (q, role) = owner(i);
    let s = QUERIES[q].subject;
    match role {
        Role::Reference => format!("a photo of a {s} in its original state ({})", image_id(i)),
        Role::Target => format!("a photo of the {s} exactly as requested ({})", image_id(i)),
        Role::Distractor => format!("a photo of a {s} almost as requested ({})", image_id(i)),
        Role::Filler => format!("a loosely related photo of a {s} ({})", image_id(i)),
    }
}

pub fn text_caption(q: usize) -> String {
    format!("imagined from text: the {} after \"{}\"", QUERIES[q].subject, QUERIES[q].text)
}

pub fn vision_caption(q: usize) -> String {
    format!("imagined from the image: the {} after \"{}\"", QUERIES[q].subject, QUERIES[q].text)
}

fn vector(entries: &[(usize, f32)]) -> Vec<f32> {
    let mut v = vec![0.0; DIM];
    for &(axis, w) in entries {
        v[axis] = w;
    }
    v
}

/// (caption vector, image vector) of catalog image `i`.
pub fn catalog_vectors(i: usize) -> (Vec<f32>, Vec<f32>) {
    let (q, role) = owner(i);
    let (a, b) = (2 * q, 2 * q + 1);
    let (main, side, noise) = match role {
        Role::Reference => (0.4, 0.1, 1.0),
        Role::Target => (1.0, 0.55, 0.1),
        Role::Distractor => (0.95, 0.5, 0.25),
        Role::Filler => (0.6, 0.3, 0.6),
    };
    (
        vector(&[(a, main), (b, side), (6, noise)]),
        vector(&[(a, side), (b, main), (7, noise)]),
    )
}

pub fn imagined_vectors(q: usize) -> (Vec<f32>, Vec<f32>) {
    let (a, b) = (2 * q, 2 * q + 1);
    (vector(&[(a, 1.0), (b, 0.3)]), vector(&[(a, 0.3), (b, 1.0)]))
}

/// Whether image `i` answers question `j` of query `q` correctly through the
/// text (`vision == false`) or vision verifier.
pub fn correct(q: usize, i: usize, j: usize, vision: bool, distractor_variant: bool) -> bool {
    let (owner_q, role) = owner(i);
    if owner_q != q {
        // unrelated images answer False to everything
        return !EXPECTED[j];
    }
    match role {
        Role::Target => !(distractor_variant && !vision && j == 2),
        Role::Distractor => distractor_variant || !(vision && j == 1),
        Role::Filler => j != 0,
        Role::Reference => j == 1,
    }
}

fn verdict_reply(answer: bool, i: usize, j: usize) -> String {
    // a little formatting noise the parser must tolerate
    match (answer, (i + j) % 3) {
        (true, 0) => "True".into(),
        (true, 1) => "true.".into(),
        (true, _) => "True, the statement holds.".into(),
        (false, 0) => "False".into(),
        (false, 1) => "FALSE".into(),
        (false, _) => "False - it does not.".into(),
    }
}

pub fn attributes(q: usize) -> Vec<Attribute> {
    QUERIES[q]
        .attributes
        .iter()
        .map(|&(a, p)| Attribute { attribute: a.to_string(), present: p })
        .collect()
}

pub fn edits(q: usize) -> Vec<String> {
    QUERIES[q].edits.iter().map(|s| s.to_string()).collect()
}

pub fn config() -> PipelineConfig {
    PipelineConfig { k: 3, k_prime: 5, n_questions: 3, ..PipelineConfig::default() }
}

pub fn manifest() -> Manifest {
    Manifest {
        dataset: DatasetKind::Custom,
        images: (0..12).map(|i| ImageHandle::new(image_id(i), format!("images/{}.png", image_id(i))).unwrap()).collect(),
        queries: (0..3)
            .map(|q| ManifestQuery {
                id: QUERIES[q].id.to_string(),
                reference: image_id(4 * q),
                text: QUERIES[q].text.to_string(),
                targets: vec![image_id(4 * q + 1)],
                subset: Some(vec![image_id(4 * q + 1), image_id(4 * q + 2), image_id(4 * q + 3)]),
            })
            .collect(),
    }
}

pub fn script(distractor_variant: bool) -> MockScript {
    let mut s = MockScript::new();
    for i in 0..12 {
        let (cap, img) = catalog_vectors(i);
        s.caption(&image_id(i), &caption_text(i))
            .text_embedding(&caption_text(i), cap)
            .image_embedding(&image_id(i), img);
    }
    for (q, gq) in QUERIES.iter().enumerate() {
        let reference_caption = caption_text(4 * q);
        let edit_lines: String = gq.edits.iter().map(|e| format!("- {e}\n")).collect();
        s.text_imagination(gq.text, &reference_caption, &format!("{edit_lines}=== CAPTION ===\n{}", text_caption(q)));
        let attr_lines: String = gq
            .attributes
            .iter()
            .map(|(a, p)| format!("{a}: {}\n", if *p { "yes" } else { "no" }))
            .collect();
        s.vision_imagination(gq.text, &image_id(4 * q), &format!("{attr_lines}=== CAPTION ===\n{}", vision_caption(q)));
        let (t, v) = imagined_vectors(q);
        s.text_embedding(&text_caption(q), t).text_embedding(&vision_caption(q), v);

        let pairs: String = gq
            .statements
            .iter()
            .zip(EXPECTED)
            .enumerate()
            .map(|(j, (st, e))| format!("{}. {st} => {}\n", j + 1, if e { "True" } else { "False" }))
            .collect();
        s.questions(gq.text, &edits(q), &attributes(q), 3, 0, &pairs);

        for i in 0..12 {
            for (j, statement) in gq.statements.iter().enumerate() {
                let t_ok = correct(q, i, j, false, distractor_variant);
                let v_ok = correct(q, i, j, true, distractor_variant);
                s.text_verdict(&caption_text(i), statement, &verdict_reply(t_ok == EXPECTED[j], i, j));
                let vision_reply = if owner(i) == (q, Role::Reference) && j == 2 {
                    // unparsable: scored as a wrong answer
                    "Maybe".to_string()
                } else {
                    verdict_reply(v_ok == EXPECTED[j], i, j)
                };
                s.vision_verdict(&image_id(i), statement, &vision_reply);
            }
        }
    }
    s
}

/// Makes one query's question generation fail with a terminal 4xx.
pub fn fail_questions(script: &mut MockScript, q: usize) {
    let gq = &QUERIES[q];
    let edits = gq.edits.join("\n");
    let attrs = render_attributes(&attributes(q));
    script.insert(CallKind::QuestionGen, &[gq.text, &edits, &attrs, "3"], &[], 0, MockResponse::Fail { fail: 400 });
}
