//! Metadata of the public benchmark scenes. No data is shipped; the entries
//! only supply reference set sizes for the pipeline.

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DatasetInfo {
    pub key: &'static str,
    pub name: &'static str,
    pub width: usize,
    pub height: usize,
    pub bands: usize,
    /// Reference endmember count from the literature.
    pub m_ref: usize,
    /// HySime estimate, shown for comparison only.
    pub hysime: usize,
}

pub const REGISTRY: [DatasetInfo; 5] = [
    DatasetInfo { key: "salinas-a", name: "Salinas-A", width: 86, height: 83, bands: 204, m_ref: 6, hysime: 18 },
    DatasetInfo { key: "pavia-university", name: "Pavia University", width: 610, height: 340, bands: 103, m_ref: 9, hysime: 60 },
    DatasetInfo { key: "cuprite", name: "Cuprite", width: 250, height: 191, bands: 188, m_ref: 12, hysime: 18 },
    DatasetInfo { key: "kennedy-space-center", name: "Kennedy Space Center", width: 512, height: 614, bands: 176, m_ref: 13, hysime: 2 },
    DatasetInfo { key: "indian-pines", name: "Indian Pines", width: 145, height: 145, bands: 200, m_ref: 16, hysime: 18 },
];

fn normalize(s: &str) -> String {
    s.chars().filter(|c| c.is_ascii_alphanumeric()).map(|c| c.to_ascii_lowercase()).collect()
}

/// Look up an entry by key or display name, ignoring case and punctuation.
/// `paviau` and `ksc` are accepted as short forms.
pub fn lookup(name: &str) -> Option<&'static DatasetInfo> {
    let wanted = match normalize(name).as_str() {
        "paviau" | "pavia" => normalize("pavia-university"),
        "ksc" => normalize("kennedy-space-center"),
        other => other.to_string(),
    };
    REGISTRY.iter().find(|d| normalize(d.key) == wanted || normalize(d.name) == wanted)
}

impl DatasetInfo {
    /// Default over-complete size: twice the reference size.
    pub fn m_over(&self) -> usize {
        2 * self.m_ref
    }
}
