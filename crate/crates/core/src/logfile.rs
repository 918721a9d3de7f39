//! Line-oriented observation logs.
//!
//! The first line is a header carrying the attribute domains and variant
//! count; every following line is one impression:
//!
//! ```text
//! #offset-log	version=1	variants=5	birth_years=1930-2005	age_bucket_years=10	geo=AL,AK,...	gender=male,female,unknown
//! 1	1985	NY	female	0	1
//! ```
//!
//! Row fields are tab-separated: timestamp, birth year, geo, gender,
//! variant id, reward (0/1).

use std::collections::HashMap;
use std::io::{BufRead, Write};

use crate::datagen::{Demographic, Demographics, LogRecord};
use crate::error::{Error, Result};

const MAGIC: &str = "#offset-log";
const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LogHeader {
    pub num_variants: usize,
    pub demographics: Demographics,
}

impl LogHeader {
    pub fn to_line(&self) -> String {
        let d = &self.demographics;
        format!(
            "{}\tversion={}\tvariants={}\tbirth_years={}-{}\tage_bucket_years={}\tgeo={}\tgender={}",
            MAGIC,
            VERSION,
            self.num_variants,
            d.first_birth_year,
            d.last_birth_year,
            d.age_bucket_years,
            d.geos.join(","),
            d.genders.join(",")
        )
    }

    pub fn parse(line: &str) -> Result<Self> {
        let err = |message: String| Error::Parse { line: 1, message };
        let mut fields = line.trim_end_matches(['\r', '\n']).split('\t');
        if fields.next() != Some(MAGIC) {
            return Err(err("missing log header".into()));
        }
        let mut kv = HashMap::new();
        for f in fields {
            let (k, v) = f
                .split_once('=')
                .ok_or_else(|| err(format!("malformed header field {:?}", f)))?;
            kv.insert(k, v);
        }
        let get = |k: &str| kv.get(k).copied().ok_or_else(|| err(format!("header lacks {}", k)));
        let version: u32 = get("version")?
            .parse()
            .map_err(|_| err("bad version".into()))?;
        if version != VERSION {
            return Err(err(format!("unsupported log version {}", version)));
        }
        let num_variants: usize = get("variants")?
            .parse()
            .map_err(|_| err("bad variant count".into()))?;
        let (first, last) = get("birth_years")?
            .split_once('-')
            .ok_or_else(|| err("bad birth year range".into()))?;
        let parse_year = |s: &str| s.parse::<u16>().map_err(|_| err(format!("bad year {:?}", s)));
        let demographics = Demographics {
            first_birth_year: parse_year(first)?,
            last_birth_year: parse_year(last)?,
            age_bucket_years: get("age_bucket_years")?
                .parse()
                .map_err(|_| err("bad age bucket width".into()))?,
            geos: get("geo")?.split(',').map(str::to_string).collect(),
            genders: get("gender")?.split(',').map(str::to_string).collect(),
        };
        demographics.validate().map_err(|e| err(e.to_string()))?;
        if num_variants == 0 {
            return Err(err("log declares zero variants".into()));
        }
        Ok(LogHeader {
            num_variants,
            demographics,
        })
    }
}

pub struct LogWriter<W: Write> {
    out: W,
    header: LogHeader,
    line: String,
}

impl<W: Write> LogWriter<W> {
    pub fn new(mut out: W, header: LogHeader) -> Result<Self> {
        writeln!(out, "{}", header.to_line())?;
        Ok(LogWriter {
            out,
            header,
            line: String::with_capacity(64),
        })
    }

    pub fn write(&mut self, rec: &LogRecord) -> Result<()> {
        use std::fmt::Write as _;
        let d = &self.header.demographics;
        let geo = d
            .geos
            .get(rec.user.geo as usize)
            .ok_or(Error::UnknownFeatureValue { feature: 1, value: rec.user.geo as u32 })?;
        let gender = d
            .genders
            .get(rec.user.gender as usize)
            .ok_or(Error::UnknownFeatureValue { feature: 2, value: rec.user.gender as u32 })?;
        self.line.clear();
        let _ = writeln!(
            self.line,
            "{}\t{}\t{}\t{}\t{}\t{}",
            rec.timestamp, rec.user.birth_year, geo, gender, rec.variant, rec.click as u8
        );
        self.out.write_all(self.line.as_bytes())?;
        Ok(())
    }

    pub fn finish(mut self) -> Result<W> {
        self.out.flush()?;
        Ok(self.out)
    }
}

/// Streams records out of a log, validating every row against the header.
pub struct LogReader<R: BufRead> {
    input: R,
    header: LogHeader,
    geo_ids: HashMap<String, u16>,
    gender_ids: HashMap<String, u8>,
    line_no: usize,
    buf: String,
}

impl<R: BufRead> LogReader<R> {
    pub fn new(mut input: R) -> Result<Self> {
        let mut first = String::new();
        if input.read_line(&mut first)? == 0 {
            return Err(Error::Parse { line: 1, message: "empty log file".into() });
        }
        let header = LogHeader::parse(&first)?;
        let d = &header.demographics;
        let geo_ids = d.geos.iter().enumerate().map(|(i, g)| (g.clone(), i as u16)).collect();
        let gender_ids = d.genders.iter().enumerate().map(|(i, g)| (g.clone(), i as u8)).collect();
        Ok(LogReader {
            input,
            header,
            geo_ids,
            gender_ids,
            line_no: 1,
            buf: String::new(),
        })
    }

    pub fn header(&self) -> &LogHeader {
        &self.header
    }

    fn parse_row(&self) -> Result<LogRecord> {
        let err = |message: String| Error::Parse { line: self.line_no, message };
        let mut fields = self.buf.trim_end_matches(['\r', '\n']).split('\t');
        let mut next = |what: &str| fields.next().ok_or_else(|| err(format!("missing {}", what)));
        let timestamp = next("timestamp")?;
        let birth_year = next("birth year")?;
        let geo = next("geo")?;
        let gender = next("gender")?;
        let variant = next("variant")?;
        let reward = next("reward")?;
        if fields.next().is_some() {
            return Err(err("too many fields".into()));
        }
        let timestamp = timestamp.parse().map_err(|_| err(format!("bad timestamp {:?}", timestamp)))?;
        let birth_year: u16 = birth_year
            .parse()
            .map_err(|_| err(format!("bad birth year {:?}", birth_year)))?;
        let d = &self.header.demographics;
        if d.age_bucket(birth_year).is_none() {
            return Err(err(format!("birth year {} outside the declared range", birth_year)));
        }
        let geo = *self.geo_ids.get(geo).ok_or_else(|| err(format!("unknown geo {:?}", geo)))?;
        let gender = *self
            .gender_ids
            .get(gender)
            .ok_or_else(|| err(format!("unknown gender {:?}", gender)))?;
        let variant: usize = variant.parse().map_err(|_| err(format!("bad variant {:?}", variant)))?;
        if variant >= self.header.num_variants {
            return Err(err(format!("variant {} not declared in header", variant)));
        }
        let click = match reward {
            "0" => false,
            "1" => true,
            other => return Err(err(format!("bad reward {:?}", other))),
        };
        Ok(LogRecord {
            timestamp,
            user: Demographic {
                birth_year,
                geo,
                gender,
            },
            variant,
            click,
        })
    }
}

impl<R: BufRead> Iterator for LogReader<R> {
    type Item = Result<LogRecord>;

    fn next(&mut self) -> Option<Result<LogRecord>> {
        loop {
            self.buf.clear();
            match self.input.read_line(&mut self.buf) {
                Ok(0) => return None,
                Ok(_) => self.line_no += 1,
                Err(e) => return Some(Err(e.into())),
            }
            if !self.buf.trim().is_empty() {
                return Some(self.parse_row());
            }
        }
    }
}
