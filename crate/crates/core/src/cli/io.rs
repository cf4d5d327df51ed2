//! CSV file formats.
//!
//! - layout: `id,well,x,y,time,kind,is_history,noise_std`
//! - ensemble: `id,m0001,m0002,...`, one row per element
//! - observations: `id,value[,noise_std]`, an empty `noise_std` falls back to the layout
//! - reference / vectors: `id,value`

use std::collections::HashMap;
use std::fs::File;
use std::io::Write;
use std::path::Path;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::ensemble::{DataElement, DataLayout, EnsembleMatrix, Observations};
use crate::error::{DsiError, Result};

pub const LAYOUT_HEADER: [&str; 8] = ["id", "well", "x", "y", "time", "kind", "is_history", "noise_std"];

fn reader(path: &Path) -> Result<csv::Reader<File>> {
    let file = File::open(path).map_err(|e| DsiError::io(path, e))?;
    Ok(csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).from_reader(file))
}

fn parse_err(path: &Path, line: u64, message: impl Into<String>) -> DsiError {
    DsiError::Parse {
        path: path.to_path_buf(),
        line: line as usize,
        message: message.into(),
    }
}

fn csv_err(path: &Path, e: csv::Error) -> DsiError {
    let line = e.position().map(|p| p.line()).unwrap_or(0);
    match e.into_kind() {
        csv::ErrorKind::Io(io) => DsiError::io(path, io),
        kind => parse_err(path, line, format!("{kind:?}")),
    }
}

/// Records paired with the 1-based line they start on.
fn records(path: &Path, expected_header: Option<&[&str]>) -> Result<(Vec<String>, Vec<(u64, csv::StringRecord)>)> {
    let mut rdr = reader(path)?;
    let header: Vec<String> = rdr.headers().map_err(|e| csv_err(path, e))?.iter().map(str::to_owned).collect();
    if let Some(expected) = expected_header {
        if header.iter().map(String::as_str).ne(expected.iter().copied()) {
            return Err(parse_err(path, 1, format!("expected header '{}', found '{}'", expected.join(","), header.join(","))));
        }
    }
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| csv_err(path, e))?;
        let line = rec.position().map(|p| p.line()).unwrap_or(0);
        out.push((line, rec));
    }
    Ok((header, out))
}

fn number(path: &Path, line: u64, field: &str, raw: &str) -> Result<f64> {
    let v: f64 = raw
        .parse()
        .map_err(|_| parse_err(path, line, format!("field '{field}': cannot parse '{raw}' as a number")))?;
    if !v.is_finite() {
        return Err(parse_err(path, line, format!("field '{field}': value '{raw}' is not finite")));
    }
    Ok(v)
}

fn boolean(path: &Path, line: u64, field: &str, raw: &str) -> Result<bool> {
    match raw.to_ascii_lowercase().as_str() {
        "true" | "1" | "yes" => Ok(true),
        "false" | "0" | "no" => Ok(false),
        _ => Err(parse_err(path, line, format!("field '{field}': expected true/false, found '{raw}'"))),
    }
}

pub fn read_layout(path: &Path) -> Result<DataLayout> {
    let (_, rows) = records(path, Some(&LAYOUT_HEADER))?;
    let mut elements = Vec::with_capacity(rows.len());
    for (line, r) in rows {
        let kind = r[5]
            .parse()
            .map_err(|e: DsiError| parse_err(path, line, e.to_string()))?;
        elements.push(DataElement {
            id: r[0].to_owned(),
            well_id: r[1].to_owned(),
            x: number(path, line, "x", &r[2])?,
            y: number(path, line, "y", &r[3])?,
            time: number(path, line, "time", &r[4])?,
            kind,
            is_history: boolean(path, line, "is_history", &r[6])?,
            noise_std: number(path, line, "noise_std", &r[7])?,
        });
    }
    DataLayout::new(elements)
}

/// Reads an ensemble and reorders its rows to follow the layout.
pub fn read_ensemble(path: &Path, layout: Arc<DataLayout>) -> Result<EnsembleMatrix> {
    let (header, rows) = records(path, None)?;
    if header.first().map(String::as_str) != Some("id") {
        return Err(parse_err(path, 1, "first column must be 'id'"));
    }
    let n_members = header.len() - 1;
    if rows.len() != layout.len() {
        return Err(DsiError::mismatch(
            format!("{}: ensemble rows vs layout elements", path.display()),
            layout.len(),
            rows.len(),
        ));
    }
    let mut data = DMatrix::zeros(layout.len(), n_members);
    let mut seen = vec![false; layout.len()];
    for (line, r) in rows {
        let i = layout
            .index_of(&r[0])
            .ok_or_else(|| parse_err(path, line, format!("element '{}' is not in the layout", &r[0])))?;
        if std::mem::replace(&mut seen[i], true) {
            return Err(parse_err(path, line, format!("duplicate element '{}'", &r[0])));
        }
        for j in 0..n_members {
            data[(i, j)] = number(path, line, &header[j + 1], &r[j + 1])?;
        }
    }
    EnsembleMatrix::new(data, layout)
}

/// Reads observations and aligns them with the history rows of the layout.
pub fn read_observations(path: &Path, layout: &DataLayout) -> Result<Observations> {
    let (header, rows) = records(path, None)?;
    let with_std = match header.iter().map(String::as_str).collect::<Vec<_>>().as_slice() {
        ["id", "value"] => false,
        ["id", "value", "noise_std"] => true,
        _ => return Err(parse_err(path, 1, format!("expected header 'id,value[,noise_std]', found '{}'", header.join(",")))),
    };
    let hist = layout.history_indices();
    let slot: HashMap<usize, usize> = hist.iter().enumerate().map(|(k, &i)| (i, k)).collect();
    let mut values = vec![None; hist.len()];
    let mut stds: Vec<f64> = layout.history_noise();
    for (line, r) in rows {
        let id = &r[0];
        let i = layout
            .index_of(id)
            .ok_or_else(|| parse_err(path, line, format!("observation of unknown element '{id}'")))?;
        let &k = slot.get(&i).ok_or_else(|| DsiError::NonHistoryObservation(id.to_owned()))?;
        if values[k].is_some() {
            return Err(parse_err(path, line, format!("duplicate observation of '{id}'")));
        }
        values[k] = Some(number(path, line, "value", &r[1])?);
        if with_std && !r[2].is_empty() {
            stds[k] = number(path, line, "noise_std", &r[2])?;
        }
    }
    let missing: Vec<&str> = values
        .iter()
        .zip(hist)
        .filter(|(v, _)| v.is_none())
        .map(|(_, &i)| layout.element(i).id.as_str())
        .collect();
    if !missing.is_empty() {
        return Err(DsiError::InvalidInput(format!(
            "{}: {} history element(s) have no observation, first '{}'",
            path.display(),
            missing.len(),
            missing[0]
        )));
    }
    let values = DVector::from_iterator(hist.len(), values.into_iter().flatten());
    Observations::new(values, DVector::from_vec(stds))
}

/// Reads an `id,value` vector aligned with the layout (every element required).
pub fn read_vector(path: &Path, layout: &DataLayout) -> Result<DVector<f64>> {
    let (_, rows) = records(path, Some(&["id", "value"]))?;
    let mut out = vec![None; layout.len()];
    for (line, r) in rows {
        let i = layout
            .index_of(&r[0])
            .ok_or_else(|| parse_err(path, line, format!("element '{}' is not in the layout", &r[0])))?;
        if out[i].replace(number(path, line, "value", &r[1])?).is_some() {
            return Err(parse_err(path, line, format!("duplicate element '{}'", &r[0])));
        }
    }
    if out.iter().any(Option::is_none) {
        return Err(DsiError::mismatch(format!("{}: vector entries vs layout elements", path.display()), layout.len(), out.iter().flatten().count()));
    }
    Ok(DVector::from_iterator(layout.len(), out.into_iter().flatten()))
}

/// Loads and cross-validates the three input files.
pub fn load_inputs(layout: &Path, ensemble: &Path, observations: &Path) -> Result<(Arc<DataLayout>, EnsembleMatrix, Observations)> {
    let layout = Arc::new(read_layout(layout)?);
    let ens = read_ensemble(ensemble, layout.clone())?;
    let obs = read_observations(observations, &layout)?;
    Ok((layout, ens, obs))
}

/// Table writer; numbers use the shortest representation that parses back exactly.
pub struct Table {
    buf: Vec<u8>,
}

impl Table {
    pub fn new(header: &[&str]) -> Self {
        let mut t = Self { buf: Vec::new() };
        t.row(header.iter().copied());
        t
    }

    pub fn row<I, S>(&mut self, cells: I)
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let mut first = true;
        for c in cells {
            if !first {
                self.buf.push(b',');
            }
            first = false;
            self.buf.extend_from_slice(c.as_ref().as_bytes());
        }
        self.buf.push(b'\n');
    }

    pub fn into_bytes(self) -> Vec<u8> {
        self.buf
    }
}

pub fn layout_table(layout: &DataLayout) -> Table {
    let mut t = Table::new(&LAYOUT_HEADER);
    for e in layout.elements() {
        t.row([
            e.id.clone(),
            e.well_id.clone(),
            e.x.to_string(),
            e.y.to_string(),
            e.time.to_string(),
            e.kind.as_str().to_owned(),
            e.is_history.to_string(),
            e.noise_std.to_string(),
        ]);
    }
    t
}

pub fn member_name(j: usize) -> String {
    format!("m{:04}", j + 1)
}

pub fn ensemble_table(ens: &EnsembleMatrix) -> Table {
    let names: Vec<String> = (0..ens.n_members()).map(member_name).collect();
    let mut header = vec!["id"];
    header.extend(names.iter().map(String::as_str));
    let mut t = Table::new(&header);
    for (i, e) in ens.layout().elements().iter().enumerate() {
        let row = ens.data().row(i);
        t.row(std::iter::once(e.id.clone()).chain(row.iter().map(f64::to_string)));
    }
    t
}

pub fn observations_table(layout: &DataLayout, obs: &Observations) -> Table {
    let mut t = Table::new(&["id", "value", "noise_std"]);
    for (k, &i) in layout.history_indices().iter().enumerate() {
        t.row([layout.element(i).id.clone(), obs.values()[k].to_string(), obs.error_std()[k].to_string()]);
    }
    t
}

pub fn vector_table(layout: &DataLayout, v: &DVector<f64>) -> Table {
    let mut t = Table::new(&["id", "value"]);
    for (e, x) in layout.elements().iter().zip(v.iter()) {
        t.row([e.id.clone(), x.to_string()]);
    }
    t
}

/// Writes `bytes` to `path`, creating or truncating it.
pub fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    let mut f = File::create(path).map_err(|e| DsiError::io(path, e))?;
    f.write_all(bytes).map_err(|e| DsiError::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use tempfile::TempDir;

    fn put(dir: &TempDir, name: &str, text: &str) -> std::path::PathBuf {
        let p = dir.path().join(name);
        std::fs::write(&p, text).unwrap();
        p
    }

    const LAYOUT: &str = "id,well,x,y,time,kind,is_history,noise_std\n\
        a,W1,0,0,30,oil_rate,true,1.5\n\
        b,W1,0,0,60,oil_rate,false,0\n";

    #[test]
    fn minimal_bundle_loads() {
        let d = TempDir::new().unwrap();
        let l = put(&d, "l.csv", LAYOUT);
        let e = put(&d, "e.csv", "id,m0001,m0002\nb,3,4\na,1,2\n");
        let o = put(&d, "o.csv", "id,value,noise_std\na,1.5,\n");
        let (layout, ens, obs) = load_inputs(&l, &e, &o).unwrap();
        assert_eq!(layout.len(), 2);
        assert_eq!(ens.data()[(0, 1)], 2.0);
        assert_eq!(ens.data()[(1, 0)], 3.0);
        assert_eq!(obs.error_std()[0], 1.5);
        let o2 = put(&d, "o2.csv", "id,value,noise_std\na,1.5,0.25\n");
        assert_eq!(read_observations(&o2, &layout).unwrap().error_std()[0], 0.25);
    }

    #[test]
    fn row_count_mismatch_names_both_counts() {
        let d = TempDir::new().unwrap();
        let l = put(&d, "l.csv", LAYOUT);
        let e = put(&d, "e.csv", "id,m0001,m0002\na,1,2\nb,3,4\nc,5,6\n");
        let o = put(&d, "o.csv", "id,value\na,1\n");
        let err = load_inputs(&l, &e, &o).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains('2') && msg.contains('3'), "{msg}");
        assert_eq!(err.exit_code(), 3);
    }

    #[test]
    fn forecast_observation_rejected() {
        let d = TempDir::new().unwrap();
        let l = put(&d, "l.csv", LAYOUT);
        let e = put(&d, "e.csv", "id,m0001,m0002\na,1,2\nb,3,4\n");
        let o = put(&d, "o.csv", "id,value\na,1\nb,2\n");
        let msg = load_inputs(&l, &e, &o).unwrap_err().to_string();
        assert!(msg.contains("observation targets non-history element"), "{msg}");
    }

    #[test]
    fn parse_error_reports_line() {
        let d = TempDir::new().unwrap();
        let l = put(&d, "l.csv", "id,well,x,y,time,kind,is_history,noise_std\na,W1,0,0,30,oil_rate,true,1\nb,W1,zero,0,60,oil_rate,false,0\n");
        match read_layout(&l).unwrap_err() {
            DsiError::Parse { line, message, .. } => {
                assert_eq!(line, 3);
                assert!(message.contains("zero"));
            }
            e => panic!("unexpected {e}"),
        }
    }

    #[test]
    fn unknown_kind_and_duplicates_rejected() {
        let d = TempDir::new().unwrap();
        let l = put(&d, "l.csv", "id,well,x,y,time,kind,is_history,noise_std\na,W1,0,0,30,gas_rate,true,1\n");
        assert!(read_layout(&l).unwrap_err().to_string().contains("gas_rate"));
        let l = put(&d, "l2.csv", "id,well,x,y,time,kind,is_history,noise_std\na,W1,0,0,30,oil_rate,true,1\na,W1,0,0,60,oil_rate,true,1\n");
        assert!(read_layout(&l).is_err());
    }

    #[test]
    fn missing_observation_rejected() {
        let d = TempDir::new().unwrap();
        let l = put(&d, "l.csv", "id,well,x,y,time,kind,is_history,noise_std\na,W1,0,0,30,oil_rate,true,1\nb,W1,0,0,60,oil_rate,true,1\n");
        let layout = read_layout(&l).unwrap();
        let o = put(&d, "o.csv", "id,value\na,1\n");
        assert!(read_observations(&o, &layout).unwrap_err().to_string().contains("'b'"));
    }

    #[test]
    fn ensemble_round_trip_is_exact() {
        let d = TempDir::new().unwrap();
        let l = put(&d, "l.csv", LAYOUT);
        let layout = Arc::new(read_layout(&l).unwrap());
        let data = DMatrix::from_row_slice(2, 3, &[0.1, 1.0 / 3.0, -2.5e-17, 1e300, 7.0, std::f64::consts::PI]);
        let ens = EnsembleMatrix::new(data, layout.clone()).unwrap();
        let p = d.path().join("ens.csv");
        write_file(&p, &ensemble_table(&ens).into_bytes()).unwrap();
        assert_eq!(read_ensemble(&p, layout).unwrap(), ens);
        let lp = d.path().join("l2.csv");
        write_file(&lp, &layout_table(ens.layout()).into_bytes()).unwrap();
        assert_eq!(&read_layout(&lp).unwrap(), ens.layout().as_ref());
    }
}
