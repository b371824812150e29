use lopdf::Document;

use super::RetrievalError;

/// Text layer of a PDF as markdown, one `<!-- page N -->` marker per page.
/// No OCR: scanned pages come out empty.
pub fn convert_pdf(bytes: &[u8]) -> Result<String, RetrievalError> {
    let unreadable = |m: String| RetrievalError::UnreadablePdf(m);
    if !bytes.starts_with(b"%PDF") {
        return Err(unreadable("missing %PDF header".into()));
    }
    let doc = Document::load_mem(bytes).map_err(|e| unreadable(e.to_string()))?;
    if doc.is_encrypted() || doc.trailer.get(b"Encrypt").is_ok() {
        return Err(unreadable("document is encrypted".into()));
    }
    let mut out = String::new();
    for (n, _) in doc.get_pages() {
        let text = doc.extract_text(&[n]).map_err(|e| unreadable(format!("page {n}: {e}")))?;
        if !out.is_empty() {
            out.push('\n');
        }
        out.push_str(&format!("<!-- page {n} -->\n\n"));
        for para in text.split("\n\n") {
            let line = para.split_whitespace().collect::<Vec<_>>().join(" ");
            if !line.is_empty() {
                out.push_str(&line);
                out.push_str("\n\n");
            }
        }
    }
    Ok(out)
}

pub fn page_markers(markdown: &str) -> usize {
    markdown.matches("<!-- page ").count()
}
