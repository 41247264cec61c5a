# Generated by Django 4.2.10 on 2026-10-18 09:12

from django.db import migrations, models


class Migration(migrations.Migration):

    initial = True

    dependencies = [
    ]

    operations = [
        migrations.CreateModel(
            name='runlog',
            fields=[
                ('runlognr', models.AutoField(primary_key=True, serialize=False)),
                ('task', models.TextField()),
                ('preset', models.TextField(blank=True, default='')),
                ('config_hash', models.TextField(blank=True, default='')),
                ('status', models.TextField()),
                ('exit_code', models.IntegerField(default=0)),
                ('out_dir', models.TextField(blank=True, default='')),
                ('message', models.TextField(blank=True, default='')),
                ('started_at', models.DateTimeField()),
                ('finished_at', models.DateTimeField()),
                ('duration', models.FloatField()),
            ],
        ),
    ]
