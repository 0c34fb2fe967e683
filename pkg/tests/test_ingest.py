import asyncio
import json

import numpy as np
import pytest

from trackwatch.domain.common import Source
from trackwatch.ingest.aivdm import dearmor, decode_aivdm, nmea_checksum, parse_timestamped_aivdm, read_aivdm_file
from trackwatch.ingest.common import (
    ArmoringError,
    ChecksumMismatchError,
    FieldRangeError,
    IngestError,
    MalformedLineError,
    MissingKinematicsError,
    MultipartUnsupportedError,
    NotPositionReportError,
)
from trackwatch.ingest.listener import AisLineListener
from trackwatch.ingest.records import parse_record, read_records, render_record


def test_parse_csv_record():
    msg = parse_record("227006760,1490000000,48.10,-5.50,12.3,215.0")
    assert msg.mmsi == 227006760
    assert msg.timestamp == 1490000000
    assert (msg.lat, msg.lon, msg.sog, msg.cog) == (48.10, -5.50, 12.3, 215.0)
    assert msg.source is Source.UNKNOWN


def test_parse_json_record():
    line = json.dumps(
        {"mmsi": 227006760, "timestamp": 1490000000, "lat": 48.1, "lon": -5.5, "sog": 12.3, "cog": 215, "source": "satellite"}
    )
    msg = parse_record(line)
    assert msg.cog == 215.0
    assert msg.source is Source.SATELLITE


def test_parse_record_range_error():
    with pytest.raises(FieldRangeError) as info:
        parse_record("1,0,95.0,0,0,0")
    assert info.value.field == "lat"


@pytest.mark.parametrize(
    "line,field",
    [
        ("1,0,48.0,-5.0,10", "line"),
        ("1,0,48.0,-5.0,10,20,terrestrial,extra", "line"),
        ("abc,0,48.0,-5.0,10,20", "mmsi"),
        ("1,0,48.0,-5.0,nan,20", "sog"),
        ("1,0.5,48.0,-5.0,1,20", "timestamp"),
        ("1,0,48.0,-5.0,1,20,radar", "source"),
        ('{"mmsi": 1, "timestamp": 0, "lat": 48.0}', "lon"),
        ("{not json", "line"),
        ("", "line"),
    ],
)
def test_parse_record_malformed(line, field):
    with pytest.raises(MalformedLineError) as info:
        parse_record(line)
    assert info.value.field == field


def test_render_record_is_exact(make_message):
    msg = make_message(lat=48.123456789012, lon=-5.000000001, sog=0.1 + 0.2, cog=215.0, source="terrestrial")
    assert parse_record(render_record(msg)) == msg


def test_read_records_skips_bad_lines(tmp_path):
    path = tmp_path / "feed.csv"
    path.write_text(
        "mmsi,timestamp,lat,lon,sog,cog,source\n"
        "# comment\n"
        "227006760,100,48.1,-5.5,12.3,215.0,terrestrial\n"
        "227006760,160,95.0,-5.5,12.3,215.0\n"
        "bad line\n"
        "\n"
        "227006760,220,48.2,-5.4,12.0,214.0\n"
    )
    messages = list(read_records(path))
    assert [m.timestamp for m in messages] == [100, 220]
    with pytest.raises(FieldRangeError):
        list(read_records(path, strict=True))


def test_dearmor_table_endpoints():
    assert dearmor("0") == [0]
    assert dearmor("w") == [63]
    assert dearmor("W`") == [39, 40]
    with pytest.raises(ArmoringError):
        dearmor("X")


def test_nmea_checksum():
    assert nmea_checksum("A") == ord("A")
    assert nmea_checksum("AB") == ord("A") ^ ord("B")


def test_decode_position_report(encode_aivdm):
    msg = decode_aivdm(encode_aivdm(), timestamp=1490000000)
    assert msg.mmsi == 227006760
    assert msg.timestamp == 1490000000
    assert msg.lat == pytest.approx(48.1, abs=1e-9)
    assert msg.lon == pytest.approx(-5.5, abs=1e-9)
    assert msg.sog == pytest.approx(12.3)
    assert msg.cog == pytest.approx(215.0)


@pytest.mark.parametrize("message_type", [1, 2, 3])
def test_decode_all_position_types(encode_aivdm, message_type):
    assert decode_aivdm(encode_aivdm(message_type=message_type), timestamp=0).mmsi == 227006760


def test_decode_aivdo_and_bytes(encode_aivdm):
    sentence = encode_aivdm(talker="AIVDO", lat=-33.5, lon=151.25)
    msg = decode_aivdm(sentence.encode("ascii"), timestamp=5)
    assert msg.lat == pytest.approx(-33.5, abs=1e-9)
    assert msg.lon == pytest.approx(151.25, abs=1e-9)


def test_flipped_checksum_digit(encode_aivdm):
    sentence = encode_aivdm()
    last = sentence[-1]
    flipped = sentence[:-1] + ("0" if last != "0" else "1")
    with pytest.raises(ChecksumMismatchError):
        decode_aivdm(flipped, timestamp=0)


def test_decode_rejections(encode_aivdm):
    with pytest.raises(MultipartUnsupportedError):
        decode_aivdm(encode_aivdm(fragments=(2, 1)), timestamp=0)
    with pytest.raises(NotPositionReportError) as info:
        decode_aivdm(encode_aivdm(message_type=5), timestamp=0)
    assert info.value.message_type == 5
    with pytest.raises(MissingKinematicsError) as info:
        decode_aivdm(encode_aivdm(sog_raw=1023), timestamp=0)
    assert info.value.field == "sog"
    with pytest.raises(MissingKinematicsError):
        decode_aivdm(encode_aivdm(cog_raw=3600), timestamp=0)
    with pytest.raises(ArmoringError):
        decode_aivdm(encode_aivdm(truncate_to=10), timestamp=0)
    with pytest.raises(FieldRangeError):
        decode_aivdm(encode_aivdm(lat=91.0), timestamp=0)


def test_read_aivdm_file(tmp_path, encode_aivdm):
    good = encode_aivdm()
    corrupt = good[:-1] + ("0" if good[-1] != "0" else "1")
    path = tmp_path / "feed.nmea"
    path.write_text(
        f"100\t{good}\n"
        f"160\t{corrupt}\n"
        f"220\t{encode_aivdm(message_type=5)}\n"
        f"no-tab {good}\n"
        f"280\t{encode_aivdm(lat=48.2)}\n"
    )
    messages = list(read_aivdm_file(path))
    assert [m.timestamp for m in messages] == [100, 280]
    assert parse_timestamped_aivdm(f"42\t{good}").timestamp == 42


# Received sentences; raw fields are (mmsi, lat, lon, sog, cog) as transmitted.
RECEIVED_SENTENCES = [
    ("!AIVDM,1,1,,A,133REv0P00P=K?TMDH6P0?vN289>,0*46", 205035000, 30742554, 1759730, 0, 0),
    ("!AIVDM,1,1,,A,133sVfPP00PD>hRMDH@jNOvN20S8,0*7F", 205448890, 30742595, 2651665, 0, 633),
    ("!AIVDM,1,1,,A,13HOI:0P0000VOHLCnHQKwvL05Ip,0*23", 227006760, 29685346, 78828, 0, 367),
    ("!AIVDM,1,1,,A,13aEOK?P00PD2wVMdLDRhgvL289?,0*26", 244670316, 31136850, 2627571, 0, 706),
    ("!AIVDM,1,1,,A,14eGrSPP00ncMJTO5C6aBwvP2D0?,0*7A", 316013198, 32592666, -78189742, 0, 2379),
    ("!AIVDM,1,1,,A,15MgK45P3@G?fl0E`JbR0OwT0@MS,0*4E", 366730000, 22682282, -73435520, 208, 513),
    ("!AIVDM,1,1,,A,15Mj23P000G?q7fK>g:o7@1:0L3S,0*1B", 366772750, 28553003, -73414409, 0, 1821),
    ("!AIVDM,1,1,,A,15MrVH0000KH<:V:NtBLoqFP2H9:,0*2F", 366913120, 10992713, -38772397, 0, 3295),
    ("!AIVDM,1,1,,A,15N9NLPP01IS<RFF7fLVmgvN00Rv,0*7F", 367156850, 23195250, -54107061, 1, 1750),
    ("!AIVDM,1,1,,A,15RTgt0PAso;90TKcjM8h6g208CQ,0*4A", 371798000, 29028980, -74037230, 123, 2240),
    ("!AIVDM,1,1,,A,16:=?;0P00`SstvFnFbeGH6L088h,0*44", 413355820, 23959210, 71819167, 0, 3421),
    ("!AIVDM,1,1,,A,16SteH0P00Jt63hHaa6SagvJ087r,0*42", 440348000, 25848090, -42454920, 0, 934),
    ("!AIVDM,1,1,,A,18UG;P0012G?Uq4EdHa=c;7@051@,0*53", 576048000, 22747300, -73453790, 66, 3500),
    ("!AIVDM,1,1,,A,1P000Oh1IT1svTP2r:43grwb0Eq4,0*01", 127, 3050000, 16250000, 612, 959),
    ("!AIVDM,1,1,,B,100h00PP0@PHFV`Mg5gTH?vNPUIp,0*3B", 786434, 31180222, 3192020, 16, 1120),
    ("!AIVDM,1,1,,B,13eaJF0P00Qd388Eew6aagvH85Ip,0*45", 249191000, 22773530, 14162180, 0, 2470),
    ("!AIVDM,1,1,,B,15M67FC000G?ufbE`FepT@3n00Sa,0*5C", 366053209, 22681271, -73404971, 0, 2193),
    ("!AIVDM,1,1,,B,15Mq4J0P01EREODRv4@74gv00HRq,0*72", 366888040, 36668480, -87774230, 1, 1810),
    ("!AIVDM,1,1,,B,15NG6V0P01G?cFhE`R2IU?wn28R>,0*05", 367380120, 22684169, -73442600, 1, 2452),
    ("!AIVDM,1,1,,B,16S`2cPP00a3UF6EKT@2:?vOr0S2,0*00", 440009390, 22471744, 75967171, 0, 552),
    ("!AIVDM,1,1,,B,177KQJ5000G?tO`K>RA1wUbN0TKH,0*5C", 477553000, 28549700, -73407500, 0, 510),
]


@pytest.mark.parametrize(
    "sentence, mmsi, lat_raw, lon_raw, sog_raw, cog_raw", RECEIVED_SENTENCES, ids=[str(r[1]) for r in RECEIVED_SENTENCES]
)
def test_decode_received_sentences(sentence, mmsi, lat_raw, lon_raw, sog_raw, cog_raw):
    msg = decode_aivdm(sentence, timestamp=1_600_000_000)
    assert msg.mmsi == mmsi
    assert msg.lat == pytest.approx(lat_raw / 600_000, abs=1e-9)
    assert msg.lon == pytest.approx(lon_raw / 600_000, abs=1e-9)
    assert msg.sog == pytest.approx(sog_raw / 10)
    assert msg.cog == pytest.approx(cog_raw / 10)


def test_decode_gpsd_reference_values():
    msg = decode_aivdm("!AIVDM,1,1,,A,15RTgt0PAso;90TKcjM8h6g208CQ,0*4A", timestamp=0)
    assert (msg.mmsi, msg.sog, msg.cog) == (371798000, 12.3, 224.0)
    assert msg.lat == pytest.approx(48.381633, abs=1e-6)
    assert msg.lon == pytest.approx(-123.395383, abs=1e-6)
    msg = decode_aivdm("!AIVDM,1,1,,B,15M67FC000G?ufbE`FepT@3n00Sa,0*5C", timestamp=0)
    assert (msg.mmsi, msg.sog, msg.cog) == (366053209, 0.0, 219.3)
    assert msg.lat == pytest.approx(37.802118, abs=1e-6)
    assert msg.lon == pytest.approx(-122.341618, abs=1e-6)


def _with_checksum(body: str) -> str:
    return f"!{body}*{nmea_checksum(body):02X}"


@pytest.mark.parametrize("seed", range(4))
def test_decoder_never_crashes_on_garbage(seed):
    rng = np.random.default_rng(seed)
    armor = "".join(chr(c) for c in list(range(48, 88)) + list(range(96, 120)))
    bases = [row[0] for row in RECEIVED_SENTENCES]
    decoded = 0
    for i in range(5000):
        kind = i % 4
        if kind == 0:
            sentence = rng.integers(0, 256, size=int(rng.integers(0, 120)), dtype=np.uint8).tobytes()
        elif kind == 1:
            base = bytearray(bases[int(rng.integers(len(bases)))].encode("ascii"))
            for position in rng.integers(0, len(base), size=int(rng.integers(1, 4))):
                base[position] = int(rng.integers(0, 256))
            sentence = bytes(base)
        elif kind == 2:
            body = bases[int(rng.integers(len(bases)))][1:].rpartition("*")[0]
            chars = list(body)
            for position in rng.integers(0, len(chars), size=int(rng.integers(1, 4))):
                chars[position] = chr(int(rng.integers(32, 127)))
            sentence = _with_checksum("".join(chars))
        else:
            payload = "".join(armor[j] for j in rng.integers(0, len(armor), size=int(rng.integers(0, 40))))
            sentence = _with_checksum(f"AIVDM,1,1,,A,{payload},0")
        try:
            msg = decode_aivdm(sentence, timestamp=0)
        except (IngestError, FieldRangeError):
            continue
        decoded += 1
        assert -90.0 <= msg.lat <= 90.0
        assert -180.0 <= msg.lon <= 180.0
        assert 0.0 <= msg.cog < 360.0
    assert decoded > 0


def test_listener_counts_malformed_lines():
    async def scenario():
        listener = AisLineListener(port=0)
        await listener.start()
        received = []
        listener.on_message_received(received.append)
        _, writer = await asyncio.open_connection("127.0.0.1", listener.port)
        writer.write(b'{"mmsi": 227006760, "timestamp": 100, "lat": 48.1, "lon": -5.5, "sog": 12.3, "cog": 215.0}\n')
        writer.write(b"{broken json\n")
        writer.write(b"227006760,160,95.0,-5.5,12.3,215.0\n")
        writer.write(b"227006760,220,48.2,-5.4,12.0,214.0\n")
        await writer.drain()
        writer.close()
        for _ in range(100):
            if listener.n_received + listener.n_malformed >= 4:
                break
            await asyncio.sleep(0.01)
        await listener.stop()
        return listener, received

    listener, received = asyncio.run(scenario())
    assert listener.n_received == 2
    assert listener.n_malformed == 2
    assert [m.timestamp for m in received] == [100, 220]
    assert listener.messages.qsize() == 2
