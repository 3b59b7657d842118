use super::{IndexError, Passage, RetrievalConfig, SourceDocument};

/// Split a document into overlapping word windows.
///
/// Windows hold `chunk_size_words` words and advance by
/// `chunk_size_words - overlap_words`. The last window may be shorter and
/// chunking stops once a window reaches the end of the body. Whitespace is
/// normalized to single spaces.
pub fn chunk_document(doc: &SourceDocument, cfg: &RetrievalConfig) -> Result<Vec<Passage>, IndexError> {
    cfg.validate()?;
    let words: Vec<&str> = doc.body.split_whitespace().collect();
    if words.is_empty() {
        return Err(IndexError::EmptyDocument(doc.doc_id.clone()));
    }
    let step = cfg.chunk_size_words - cfg.overlap_words;
    let mut passages = Vec::new();
    let mut start = 0;
    loop {
        let end = (start + cfg.chunk_size_words).min(words.len());
        let ordinal = passages.len() as u32;
        passages.push(Passage {
            passage_id: Passage::make_id(&doc.doc_id, ordinal),
            doc_id: doc.doc_id.clone(),
            ordinal,
            text: words[start..end].join(" "),
            word_count: (end - start) as u32,
        });
        if end == words.len() {
            break;
        }
        start += step;
    }
    Ok(passages)
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;

    use super::*;

    fn body(n: usize) -> String {
        (0..n).map(|i| format!("w{i}")).collect::<Vec<_>>().join(" ")
    }

    fn cfg(size: usize, overlap: usize) -> RetrievalConfig {
        RetrievalConfig { k: 3, chunk_size_words: size, overlap_words: overlap }
    }

    /// Window starts by direct enumeration: every multiple of the step below
    /// the length, dropping windows that lie entirely inside the previous one.
    fn oracle_starts(len: usize, size: usize, overlap: usize) -> Vec<usize> {
        let step = size - overlap;
        let mut starts: Vec<usize> = (0..).map(|i| i * step).take_while(|s| *s < len).collect();
        while starts.len() > 1 && starts[starts.len() - 2] + size >= len {
            starts.pop();
        }
        starts
    }

    #[test]
    fn short_document_is_one_passage() {
        let p = chunk_document(&SourceDocument::new("d", body(100)), &cfg(400, 50)).unwrap();
        assert_eq!(p.len(), 1);
        assert_eq!(p[0].word_count, 100);
    }

    #[test]
    fn thousand_words_make_three_windows() {
        let p = chunk_document(&SourceDocument::new("d", body(1000)), &cfg(400, 50)).unwrap();
        assert_eq!(oracle_starts(1000, 400, 50), vec![0, 350, 700]);
        assert_eq!(p.len(), 3);
        assert!(p[1].text.starts_with("w350 "));
        assert!(p[2].text.starts_with("w700 "));
        assert_eq!(p[2].word_count, 300);
        assert_eq!(p.iter().map(|p| p.ordinal).collect::<Vec<_>>(), vec![0, 1, 2]);
    }

    #[test]
    fn empty_body_is_an_error() {
        let err = chunk_document(&SourceDocument::new("d", "  \n "), &cfg(400, 50)).unwrap_err();
        assert!(matches!(err, IndexError::EmptyDocument(id) if id == "d"));
    }

    proptest! {
        #[test]
        fn windows_match_oracle_and_rebuild_body(len in 1usize..600, size in 1usize..80, overlap_frac in 0.0f64..1.0) {
            let overlap = ((size as f64) * overlap_frac) as usize % size;
            let text = body(len);
            let passages = chunk_document(&SourceDocument::new("d", text.clone()), &cfg(size, overlap)).unwrap();
            let starts = oracle_starts(len, size, overlap);
            prop_assert_eq!(passages.len(), starts.len());
            for (p, s) in passages.iter().zip(&starts) {
                let first = format!("w{s}");
                prop_assert_eq!(p.text.split(' ').next(), Some(first.as_str()));
            }
            // dropping each window's overlap with its predecessor reconstructs the body
            let mut rebuilt: Vec<&str> = Vec::new();
            for (i, p) in passages.iter().enumerate() {
                let skip = if i == 0 { 0 } else { (starts[i - 1] + size).saturating_sub(starts[i]) };
                rebuilt.extend(p.text.split(' ').skip(skip));
            }
            prop_assert_eq!(rebuilt.join(" "), text);
        }
    }
}
