use std::fmt;

use image::imageops::FilterType;
use serde::{Deserialize, Serialize};

use super::SonifyError;

/// An sRGB colour. Serializes as `[r, g, b]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Rgb(pub u8, pub u8, pub u8);

impl Rgb {
    pub fn hex(&self) -> String {
        format!("#{:02x}{:02x}{:02x}", self.0, self.1, self.2)
    }
}

impl fmt::Display for Rgb {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "rgb({}, {}, {})", self.0, self.1, self.2)
    }
}

/// Categorical fallback colours for inputs that carry no colour of their own.
pub const PALETTE: [Rgb; 8] = [
    Rgb(78, 121, 167),
    Rgb(242, 142, 43),
    Rgb(225, 87, 89),
    Rgb(118, 183, 178),
    Rgb(89, 161, 79),
    Rgb(237, 201, 72),
    Rgb(176, 122, 161),
    Rgb(255, 157, 167),
];

pub fn palette_color(index: usize) -> Rgb {
    PALETTE[index % PALETTE.len()]
}

const BASE_COLORS: [(&str, Rgb); 16] = [
    ("black", Rgb(0, 0, 0)),
    ("white", Rgb(255, 255, 255)),
    ("red", Rgb(255, 0, 0)),
    ("green", Rgb(0, 128, 0)),
    ("blue", Rgb(0, 0, 255)),
    ("yellow", Rgb(255, 255, 0)),
    ("orange", Rgb(255, 165, 0)),
    ("purple", Rgb(128, 0, 128)),
    ("pink", Rgb(255, 192, 203)),
    ("brown", Rgb(165, 42, 42)),
    ("gray", Rgb(128, 128, 128)),
    ("cyan", Rgb(0, 255, 255)),
    ("magenta", Rgb(255, 0, 255)),
    ("gold", Rgb(255, 215, 0)),
    ("silver", Rgb(192, 192, 192)),
    ("beige", Rgb(245, 245, 220)),
];

/// A named colour found in text.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NamedColor {
    pub name: String,
    pub rgb: Rgb,
}

/// Colour words recognised in captions and user text.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColorLexicon {
    entries: Vec<NamedColor>,
}

impl Default for ColorLexicon {
    fn default() -> Self {
        Self {
            entries: BASE_COLORS
                .iter()
                .map(|&(name, rgb)| NamedColor {
                    name: name.to_string(),
                    rgb,
                })
                .collect(),
        }
    }
}

impl ColorLexicon {
    /// Default lexicon plus extra (or overriding) entries. Names are matched
    /// case-insensitively.
    pub fn with_entries(extra: impl IntoIterator<Item = (String, Rgb)>) -> Self {
        let mut lex = Self::default();
        for (name, rgb) in extra {
            let name = name.to_lowercase();
            match lex.entries.iter_mut().find(|e| e.name == name) {
                Some(e) => e.rgb = rgb,
                None => lex.entries.push(NamedColor { name, rgb }),
            }
        }
        lex
    }

    pub fn entries(&self) -> &[NamedColor] {
        &self.entries
    }

    pub fn lookup(&self, word: &str) -> Option<&NamedColor> {
        self.entries.iter().find(|e| e.name == word)
    }

    /// Whole-word, case-insensitive scan. Results keep first-occurrence order
    /// without duplicates.
    pub fn extract(&self, text: &str) -> Vec<NamedColor> {
        let mut found: Vec<NamedColor> = Vec::new();
        for word in words(text) {
            if let Some(c) = self.lookup(&word) {
                if !found.iter().any(|f| f.name == c.name) {
                    found.push(c.clone());
                }
            }
        }
        found
    }
}

/// Lowercased alphanumeric words.
pub(crate) fn words(text: &str) -> impl Iterator<Item = String> + '_ {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|w| !w.is_empty())
        .map(str::to_lowercase)
}

/// Colours named in `text`, using the default 16-colour lexicon.
pub fn extract_colors(text: &str) -> Vec<Rgb> {
    ColorLexicon::default()
        .extract(text)
        .into_iter()
        .map(|c| c.rgb)
        .collect()
}

/// Centroid of the most populated 4-bit-per-channel colour bin, after
/// downsampling to at most 64×64. Ties go to the lowest bin index.
pub fn dominant_color(image_bytes: &[u8]) -> Result<Rgb, SonifyError> {
    let img = super::decode_image(image_bytes)?;
    let img = if img.width() > 64 || img.height() > 64 {
        img.resize(64, 64, FilterType::Nearest)
    } else {
        img
    };
    let mut hist = vec![0u32; 1 << 12];
    for p in img.to_rgb8().pixels() {
        let [r, g, b] = p.0;
        let bin = (usize::from(r >> 4) << 8) | (usize::from(g >> 4) << 4) | usize::from(b >> 4);
        hist[bin] += 1;
    }
    let (bin, _) = hist
        .iter()
        .enumerate()
        .fold((0, 0), |best, (i, &n)| if n > best.1 { (i, n) } else { best });
    let centre = |q: usize| (q as u8) * 16 + 8;
    Ok(Rgb(centre(bin >> 8), centre((bin >> 4) & 0xf), centre(bin & 0xf)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use image::{ImageFormat, RgbImage};
    use std::io::Cursor;

    fn png(img: RgbImage) -> Vec<u8> {
        let mut out = Vec::new();
        img.write_to(&mut Cursor::new(&mut out), ImageFormat::Png).unwrap();
        out
    }

    #[test]
    fn cat_caption_colors() {
        assert_eq!(
            extract_colors("a yellow and white striped cat"),
            vec![Rgb(255, 255, 0), Rgb(255, 255, 255)]
        );
        assert!(extract_colors("a quiet melody").is_empty());
    }

    #[test]
    fn whole_word_and_dedup() {
        assert_eq!(extract_colors("REDraw the red line"), vec![Rgb(255, 0, 0)]);
        assert_eq!(extract_colors("Blue, BLUE; green-blue"), vec![Rgb(0, 0, 255), Rgb(0, 128, 0)]);
    }

    #[test]
    fn lexicon_extension() {
        let lex = ColorLexicon::with_entries([("Teal".to_string(), Rgb(0, 128, 128))]);
        let found = lex.extract("teal and red");
        assert_eq!(found[0].rgb, Rgb(0, 128, 128));
        assert_eq!(found[1].name, "red");
        assert_eq!(lex.entries().len(), 17);
    }

    #[test]
    fn dominant_of_solid_images() {
        let red = png(RgbImage::from_pixel(10, 10, image::Rgb([255, 0, 0])));
        assert_eq!(dominant_color(&red).unwrap(), Rgb(248, 8, 8));
        let black = png(RgbImage::from_pixel(3, 7, image::Rgb([0, 0, 0])));
        assert_eq!(dominant_color(&black).unwrap(), Rgb(8, 8, 8));
    }

    #[test]
    fn dominant_tie_goes_to_lowest_bin() {
        let img = RgbImage::from_fn(10, 10, |x, _| {
            if x < 5 {
                image::Rgb([255, 255, 255])
            } else {
                image::Rgb([0, 0, 0])
            }
        });
        assert_eq!(dominant_color(&png(img)).unwrap(), Rgb(8, 8, 8));
    }

    #[test]
    fn large_images_are_downsampled() {
        let img = RgbImage::from_fn(300, 200, |x, _| {
            if x < 200 {
                image::Rgb([10, 200, 30])
            } else {
                image::Rgb([250, 250, 250])
            }
        });
        assert_eq!(dominant_color(&png(img)).unwrap(), Rgb(8, 200, 24));
    }

    #[test]
    fn undecodable_image() {
        assert!(matches!(dominant_color(b"nope"), Err(SonifyError::BadImage(_))));
    }
}
