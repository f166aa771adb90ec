//! PASCAL VOC annotation parsing.
//!
//! Only the VOC element subset is understood (annotation / filename / size /
//! object / bndbox, plus the difficult flag). Namespaces and CDATA are not
//! supported; that restriction is part of the format contract.

use thiserror::Error;

use super::ClassTable;
use crate::geometry::BoxXYXY;

#[derive(Debug, Error, PartialEq)]
pub enum VocError {
    #[error("malformed XML: {0}")]
    MalformedXml(String),
    #[error("unknown class: {0}")]
    UnknownClass(String),
    #[error("bad box: {0}")]
    BadBox(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct VocObject {
    pub name: String,
    pub bndbox: BoxXYXY,
    pub difficult: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct VocAnnotation {
    pub filename: String,
    pub width: usize,
    pub height: usize,
    pub objects: Vec<VocObject>,
}

struct Element {
    name: String,
    children: Vec<Element>,
    text: String,
}

impl Element {
    fn child(&self, name: &str) -> Option<&Element> {
        self.children.iter().find(|c| c.name == name)
    }

    fn text_of(&self, name: &str) -> Result<&str, VocError> {
        self.child(name)
            .map(|c| c.text.trim())
            .ok_or_else(|| VocError::MalformedXml(format!("missing <{name}>")))
    }
}

/// Minimal well-formedness parser for the VOC subset. Attributes are
/// scanned over and discarded; processing instructions and comments are
/// skipped.
fn parse_document(text: &str) -> Result<Element, VocError> {
    let bytes = text.as_bytes();
    let mut pos = 0usize;
    let mut stack: Vec<Element> = Vec::new();
    let mut root: Option<Element> = None;
    let err = |m: &str| VocError::MalformedXml(m.to_string());

    while pos < bytes.len() {
        if bytes[pos] == b'<' {
            if text[pos..].starts_with("<!--") {
                let end = text[pos..]
                    .find("-->")
                    .ok_or_else(|| err("unterminated comment"))?;
                pos += end + 3;
                continue;
            }
            if text[pos..].starts_with("<?") {
                let end = text[pos..].find("?>").ok_or_else(|| err("unterminated <?"))?;
                pos += end + 2;
                continue;
            }
            let close = text[pos..]
                .find('>')
                .ok_or_else(|| err("unterminated tag"))?;
            let inner = &text[pos + 1..pos + close];
            pos += close + 1;
            if let Some(name) = inner.strip_prefix('/') {
                let name = name.trim();
                let el = stack.pop().ok_or_else(|| err("unbalanced closing tag"))?;
                if el.name != name {
                    return Err(err(&format!(
                        "mismatched tag: <{}> closed by </{}>",
                        el.name, name
                    )));
                }
                match stack.last_mut() {
                    Some(parent) => parent.children.push(el),
                    None => {
                        if root.is_some() {
                            return Err(err("multiple root elements"));
                        }
                        root = Some(el);
                    }
                }
            } else {
                let self_closing = inner.ends_with('/');
                let inner = inner.trim_end_matches('/');
                let name = inner.split_whitespace().next().ok_or_else(|| err("empty tag"))?;
                let el = Element {
                    name: name.to_string(),
                    children: Vec::new(),
                    text: String::new(),
                };
                if self_closing {
                    match stack.last_mut() {
                        Some(parent) => parent.children.push(el),
                        None => {
                            if root.is_some() {
                                return Err(err("multiple root elements"));
                            }
                            root = Some(el);
                        }
                    }
                } else {
                    stack.push(el);
                }
            }
        } else {
            let next = text[pos..].find('<').map(|i| pos + i).unwrap_or(bytes.len());
            let chunk = &text[pos..next];
            if let Some(el) = stack.last_mut() {
                el.text.push_str(chunk);
            } else if !chunk.trim().is_empty() {
                return Err(err("text outside the root element"));
            }
            pos = next;
        }
    }
    if !stack.is_empty() {
        return Err(err(&format!("unclosed element <{}>", stack.last().unwrap().name)));
    }
    root.ok_or_else(|| err("empty document"))
}

fn parse_number(el: &Element, name: &str) -> Result<f64, VocError> {
    let text = el.text_of(name)?;
    text.parse()
        .map_err(|_| VocError::BadBox(format!("non-numeric <{name}>: {text:?}")))
}

/// Parse a VOC XML annotation, validating object class names against `table`.
pub fn parse_voc_xml(text: &str, table: &ClassTable) -> Result<VocAnnotation, VocError> {
    let root = parse_document(text)?;
    if root.name != "annotation" {
        return Err(VocError::MalformedXml(format!(
            "root element is <{}>, want <annotation>",
            root.name
        )));
    }
    let size = root
        .child("size")
        .ok_or_else(|| VocError::MalformedXml("missing <size>".into()))?;
    let width = parse_number(size, "width")
        .map_err(|_| VocError::MalformedXml("bad <width>".into()))? as usize;
    let height = parse_number(size, "height")
        .map_err(|_| VocError::MalformedXml("bad <height>".into()))? as usize;
    if width == 0 || height == 0 {
        return Err(VocError::MalformedXml("non-positive image size".into()));
    }
    let filename = root
        .child("filename")
        .map(|c| c.text.trim().to_string())
        .unwrap_or_default();

    let mut objects = Vec::new();
    for obj in root.children.iter().filter(|c| c.name == "object") {
        let name = obj.text_of("name")?.to_string();
        if name.is_empty() {
            return Err(VocError::MalformedXml("empty object <name>".into()));
        }
        if table.id_of(&name).is_none() {
            return Err(VocError::UnknownClass(name));
        }
        let bnd = obj
            .child("bndbox")
            .ok_or_else(|| VocError::MalformedXml("missing <bndbox>".into()))?;
        let xmin = parse_number(bnd, "xmin")?;
        let ymin = parse_number(bnd, "ymin")?;
        let xmax = parse_number(bnd, "xmax")?;
        let ymax = parse_number(bnd, "ymax")?;
        let bndbox = BoxXYXY::new(xmin, ymin, xmax, ymax)
            .map_err(|e| VocError::BadBox(format!("({xmin},{ymin},{xmax},{ymax}): {e}")))?;
        let difficult = obj
            .child("difficult")
            .map(|c| c.text.trim() == "1")
            .unwrap_or(false);
        objects.push(VocObject { name, bndbox, difficult });
    }
    Ok(VocAnnotation { filename, width, height, objects })
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"<?xml version="1.0"?>
<annotation>
  <filename>000012.jpg</filename>
  <size><width>500</width><height>375</height><depth>3</depth></size>
  <object>
    <name>dog</name>
    <difficult>0</difficult>
    <bndbox><xmin>48</xmin><ymin>240</ymin><xmax>195</xmax><ymax>371</ymax></bndbox>
  </object>
</annotation>
"#;

    #[test]
    fn minimal_document() {
        let table = ClassTable::default_voc();
        let ann = parse_voc_xml(MINIMAL, &table).unwrap();
        assert_eq!(ann.filename, "000012.jpg");
        assert_eq!((ann.width, ann.height), (500, 375));
        assert_eq!(ann.objects.len(), 1);
        let obj = &ann.objects[0];
        assert_eq!(obj.name, "dog");
        assert!(!obj.difficult);
        assert_eq!(obj.bndbox, BoxXYXY::new(48.0, 240.0, 195.0, 371.0).unwrap());
    }

    #[test]
    fn zero_objects() {
        let table = ClassTable::default_voc();
        let ann = parse_voc_xml(
            "<annotation><size><width>10</width><height>10</height></size></annotation>",
            &table,
        )
        .unwrap();
        assert!(ann.objects.is_empty());
    }

    #[test]
    fn unknown_class() {
        let table = ClassTable::default_voc();
        let doc = MINIMAL.replace("dog", "zebra");
        assert_eq!(
            parse_voc_xml(&doc, &table).unwrap_err(),
            VocError::UnknownClass("zebra".into())
        );
    }

    #[test]
    fn unbalanced_tag() {
        let table = ClassTable::default_voc();
        let err = parse_voc_xml("<annotation><size></annotation>", &table).unwrap_err();
        assert!(matches!(err, VocError::MalformedXml(_)));
    }

    #[test]
    fn inverted_box() {
        let table = ClassTable::default_voc();
        let doc = MINIMAL.replace("<xmax>195</xmax>", "<xmax>10</xmax>");
        assert!(matches!(parse_voc_xml(&doc, &table).unwrap_err(), VocError::BadBox(_)));
    }

    #[test]
    fn non_numeric_coordinate() {
        let table = ClassTable::default_voc();
        let doc = MINIMAL.replace("<xmin>48</xmin>", "<xmin>forty</xmin>");
        assert!(matches!(parse_voc_xml(&doc, &table).unwrap_err(), VocError::BadBox(_)));
    }

    #[test]
    fn difficult_flag_retained() {
        let table = ClassTable::default_voc();
        let doc = MINIMAL.replace("<difficult>0</difficult>", "<difficult>1</difficult>");
        let ann = parse_voc_xml(&doc, &table).unwrap();
        assert!(ann.objects[0].difficult);
    }
}
